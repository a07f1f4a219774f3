"""Experiment grid: ingest -> features -> windows -> train -> evaluate per cell.

Every cell starts from the same seed (``ExperimentConfig.seed``): model
initialization draws from ``default_rng([seed, 0])`` and dropout masks from
``default_rng([seed, 1])``. A cell can therefore be rerun in isolation and
reproduce its grid result exactly.
"""
from __future__ import annotations

import csv
import dataclasses
import datetime as dt
import hashlib
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .dataset import SplitSpec, build_datasets, split_series
from .errors import BuildError, ConfigError, DataError, NumericalError
from .evaluate import DEFAULT_THRESHOLD, evaluate
from .features import (MODES, CentralitySeries, FeatureCatalog, build_catalog, build_count_tensor,
                       build_series, feature_correlation, write_correlation, write_series)
from .ingest import EventRecord, IngestConfig, filter_events, parse_events, read_events, write_events
from .models import MODEL_KINDS, ModelSpec, build, save_model, train, write_history

log = logging.getLogger(__name__)

REPORT_NAME = "grid_report.json"
DEFAULT_WIDTHS = [1, 5, 15, 30]
# fields that do not change results and so stay out of the config hash
_UNHASHED = ("output_dir", "workers")


@dataclass
class ExperimentConfig:
    events: str | None = None  # canonical event CSV
    gtd_csv: str | None = None  # raw GTD-layout CSV, ingested on the fly
    country: str = "Afghanistan"
    window_start: str = "2001-01-01"
    window_end: str = "2018-12-31"
    exclude_doubtful: bool = True
    unknown_date_policy: str = "drop"
    min_presence: int = 10
    threshold: float = DEFAULT_THRESHOLD
    seed: int = 0
    models: list[str] = field(default_factory=lambda: list(MODEL_KINDS))
    widths: list[int] = field(default_factory=lambda: list(DEFAULT_WIDTHS))
    modes: list[str] = field(default_factory=lambda: list(MODES))
    epochs: int = 100
    batch_size: int = 16
    patience: int = 10
    learning_rate: float = 0.001
    units: int = 32
    dropout: float = 0.5
    output_dir: str = "results"
    workers: int = 1

    def __post_init__(self):
        bad = [m for m in self.models if m not in MODEL_KINDS]
        if bad:
            raise ConfigError(f"unknown model kinds {bad}; expected a subset of {MODEL_KINDS}")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown feature modes {bad}; expected a subset of {MODES}")
        if not self.models or not self.widths or not self.modes:
            raise ConfigError("models, widths and modes must be non-empty")
        if any(int(w) < 1 for w in self.widths):
            raise ConfigError("input widths must be positive")
        self.widths = [int(w) for w in self.widths]
        self.ingest_config()  # validates the window

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path: str | os.PathLike) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                return cls.from_dict(json.load(fh))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def semantic_dict(self) -> dict:
        return {k: v for k, v in self.to_dict().items() if k not in _UNHASHED}

    def config_hash(self) -> str:
        payload = json.dumps(self.semantic_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]

    def ingest_config(self) -> IngestConfig:
        try:
            start = dt.date.fromisoformat(self.window_start)
            end = dt.date.fromisoformat(self.window_end)
        except ValueError as exc:
            raise ConfigError(f"bad window date: {exc}") from exc
        return IngestConfig(self.country, start, end, self.exclude_doubtful, self.unknown_date_policy)

    def model_spec(self, kind: str, width: int, F: int, Y: int) -> ModelSpec:
        return ModelSpec(kind, width, F, Y, seed=self.seed, epochs=self.epochs,
                         batch_size=self.batch_size, patience=self.patience,
                         learning_rate=self.learning_rate, units=self.units, dropout=self.dropout)


@dataclass
class Cell:
    model: str
    width: int
    mode: str
    status: str = "pending"  # run | skipped
    reason: str = ""

    @property
    def key(self) -> str:
        return f"{self.model}_w{self.width}_{self.mode}"


def load_events(cfg: ExperimentConfig) -> list[EventRecord]:
    if cfg.gtd_csv:
        with open(cfg.gtd_csv, "rb") as fh:
            parsed = parse_events(fh, unknown_date_policy=cfg.unknown_date_policy)
        raw = parsed.events
    elif cfg.events:
        with open(cfg.events, newline="") as fh:
            raw = read_events(fh)
    else:
        raise ConfigError("config names no event source (set 'events' or 'gtd_csv')")
    return filter_events(raw, cfg.ingest_config())


def plan_cells(cfg: ExperimentConfig) -> list[Cell]:
    """All model x width x mode combinations, infeasible ones marked skipped."""
    cells = []
    for kind in cfg.models:
        for width in cfg.widths:
            for i, mode in enumerate(cfg.modes):
                cell = Cell(kind, width, mode)
                if kind == "baseline" and width != 1:
                    cell.status, cell.reason = "skipped", "baseline uses only the previous unit (width 1)"
                elif kind == "baseline" and i > 0:
                    cell.status = "skipped"
                    cell.reason = f"baseline is mode-independent; reported under {cfg.modes[0]}"
                cells.append(cell)
    return cells


def _check_buildable(cells: list[Cell], cfg: ExperimentConfig, F: int, Y: int) -> None:
    for cell in cells:
        if cell.status == "skipped":
            continue
        try:
            build(cfg.model_spec(cell.model, cell.width, F, Y))
        except BuildError as exc:
            cell.status, cell.reason = "skipped", str(exc)


def _write_predictions(path: Path, unit_index, pred, truth, names) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["unit", *(f"pred_{n}" for n in names), *(f"true_{n}" for n in names)])
        for u, p, t in zip(unit_index, pred, truth):
            writer.writerow([int(u), *(repr(float(v)) for v in p), *(repr(float(v)) for v in t)])


def read_predictions(path: str | os.PathLike) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    k = (len(header) - 1) // 2
    data = np.array([[float(v) for v in r[1:]] for r in body]).reshape(len(body), 2 * k)
    units = np.array([int(r[0]) for r in body], dtype=np.int64)
    return units, data[:, :k], data[:, k:]


def run_cell(cell: Cell, cfg: ExperimentConfig, series: dict[str, CentralitySeries],
             out_dir: Path, catalog_hash: str) -> dict:
    meta = series["meta_graph"]
    catalog = meta.catalog
    inputs = meta if cell.model == "baseline" else series[cell.mode]
    ds = build_datasets(inputs, cell.width, label_source=meta)
    spec = cfg.model_spec(cell.model, cell.width, catalog.n_features, len(catalog.targets))
    model = build(spec)
    trained = train(model, ds["train"], ds["val"])
    test = ds["test"]
    pred = model.predict(test.inputs)
    report = evaluate(pred, test.labels, list(catalog.targets), cfg.threshold,
                      unit_index=test.label_unit_index,
                      attacks=meta.attacks_per_unit[test.label_unit_index])

    cell_dir = out_dir / "cells" / cell.key
    cell_dir.mkdir(parents=True, exist_ok=True)
    _write_predictions(cell_dir / "predictions.csv", test.label_unit_index, pred, test.labels,
                       catalog.targets)
    with open(cell_dir / "metrics.json", "w") as fh:
        fh.write(report.to_json())
    dates = [meta.unit_start(int(u)).isoformat() for u in test.label_unit_index]
    with open(cell_dir / "units.csv", "w", newline="") as fh:
        report.write_units_csv(fh, dates)
    with open(cell_dir / "frequencies.csv", "w", newline="") as fh:
        report.write_frequencies_csv(fh)
    with open(cell_dir / "history.csv", "w", newline="") as fh:
        write_history(trained, fh)
    with open(cell_dir / "checkpoint.json", "w") as fh:
        save_model(model, fh, catalog_hash, extra={"mode": cell.mode})

    return {
        **report.summary(),
        "adjustments": list(model.adjustments),
        "param_count": model.param_count(),
        "stopped_epoch": trained.stopped_epoch,
        "best_epoch": trained.best_epoch,
        "best_val_mse": None if trained.spec.kind == "baseline" else trained.best_val_mse,
        "n_train": len(ds["train"]), "n_val": len(ds["val"]), "n_test": len(test),
        "artifacts": f"cells/{cell.key}",
    }


def _run_cell_job(args):
    cell, cfg, series, out_dir, catalog_hash = args
    return run_cell(cell, cfg, series, Path(out_dir), catalog_hash)


def compare_modes(report: dict) -> list[dict]:
    """Meta-graph minus shallow deltas per (model, width), largest set-accuracy gain first."""
    cells = {(c["model"], c["width"], c["mode"]): c for c in report["cells"] if c["status"] == "run"}
    rows = []
    order = {k: i for i, k in enumerate(MODEL_KINDS)}
    for (model, width, mode), meta in sorted(cells.items()):
        if mode != "meta_graph" or model == "baseline":
            continue
        shallow = cells.get((model, width, "shallow"))
        if shallow is None:
            log.warning("no shallow counterpart for %s width %d; omitted from comparison", model, width)
            continue
        rows.append({
            "model": model, "width": width,
            "set_accuracy_meta": meta["set_accuracy"], "set_accuracy_shallow": shallow["set_accuracy"],
            "delta_set_accuracy": meta["set_accuracy"] - shallow["set_accuracy"],
            "delta_element_accuracy": meta["element_accuracy"] - shallow["element_accuracy"],
            "delta_mse": meta["mse"] - shallow["mse"],
        })
    rows.sort(key=lambda r: (-r["delta_set_accuracy"], order[r["model"]], r["width"]))
    return rows


def write_comparison(rows: list[dict], stream) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    cols = ["model", "width", "set_accuracy_meta", "set_accuracy_shallow", "delta_set_accuracy",
            "delta_element_accuracy", "delta_mse"]
    writer.writerow(cols)
    for r in rows:
        writer.writerow([r[c] if c in ("model", "width") else f"{r[c]:.6f}" for c in cols])


def build_features(events: Sequence[EventRecord], cfg: ExperimentConfig, modes=MODES):
    icfg = cfg.ingest_config()
    catalog = build_catalog(events, cfg.min_presence, icfg.window_start)
    if not catalog.targets:
        raise DataError("no target feature survives the presence filter")
    tensor = build_count_tensor(events, catalog, icfg.window_start, icfg.window_end)
    wanted = ["meta_graph", *(m for m in modes if m != "meta_graph")]
    series = {mode: build_series(tensor, catalog, mode) for mode in wanted}
    return catalog, tensor, series


def run_grid(cfg: ExperimentConfig, events: Sequence[EventRecord] | None = None) -> dict:
    """Run every feasible cell and write all artifacts under ``cfg.output_dir``."""
    if events is None:
        events = load_events(cfg)
    else:
        events = filter_events(events, cfg.ingest_config())
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    catalog, tensor, series = build_features(events, cfg, cfg.modes)
    catalog_hash = catalog.digest()
    split_series(series["meta_graph"])  # fails early when U is too small
    with open(out_dir / "catalog.json", "w") as fh:
        fh.write(catalog.to_json())
    for mode, s in sorted(series.items()):
        with open(out_dir / f"series_{mode}.csv", "w", newline="") as fh:
            write_series(s, fh)
    corr, constant = feature_correlation(series["meta_graph"])
    with open(out_dir / "correlation.csv", "w", newline="") as fh:
        write_correlation(corr, constant, catalog, fh)

    cells = plan_cells(cfg)
    _check_buildable(cells, cfg, catalog.n_features, len(catalog.targets))
    todo = [c for c in cells if c.status != "skipped"]
    jobs = [(c, cfg, series, str(out_dir), catalog_hash) for c in todo]
    if cfg.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(_run_cell_job, jobs))
    else:
        results = [_run_cell_job(j) for j in jobs]

    by_key = {c.key: r for c, r in zip(todo, results)}
    cell_entries = []
    for c in cells:
        entry = {"model": c.model, "width": c.width, "mode": c.mode}
        if c.status == "skipped":
            entry.update(status="skipped", reason=c.reason)
            log.info("skipped %s: %s", c.key, c.reason)
        else:
            entry.update(status="run", **by_key[c.key])
        cell_entries.append(entry)

    a, b = SplitSpec().boundaries(tensor.n_units)
    report = {
        "version": __version__,
        "config": cfg.semantic_dict(),
        "config_hash": cfg.config_hash(),
        "seed": cfg.seed,
        "n_events": len(events),
        "n_units": tensor.n_units,
        "split": {"train": a, "val": b - a, "test": tensor.n_units - b},
        "no_attack_units": int((tensor.attacks_per_unit == 0).sum()),
        "catalog": catalog.to_dict(),
        "catalog_hash": catalog_hash,
        "dropout_placement": "lstm_input",
        "windows_cross_splits": False,
        "cells": cell_entries,
        "accounting": {"grid_size": len(cells),
                       "run": sum(e["status"] == "run" for e in cell_entries),
                       "skipped": sum(e["status"] == "skipped" for e in cell_entries)},
    }
    report["comparison"] = compare_modes(report)
    with open(out_dir / REPORT_NAME, "w") as fh:
        json.dump(report, fh, indent=2)
        fh.write("\n")
    with open(out_dir / "comparison.csv", "w", newline="") as fh:
        write_comparison(report["comparison"], fh)
    return report


def verify(out_dir: str | os.PathLike, tol: float = 1e-12) -> list[str]:
    """Recompute both accuracies, MSE and the comparison from persisted artifacts.

    Returns a list of mismatch descriptions (empty when everything agrees).
    """
    out_dir = Path(out_dir)
    try:
        with open(out_dir / REPORT_NAME) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read {out_dir / REPORT_NAME}: {exc}") from exc
    problems = []
    threshold = report["config"]["threshold"]
    for c in report["cells"]:
        if c["status"] != "run":
            continue
        units, pred, truth = read_predictions(out_dir / c["artifacts"] / "predictions.csv")
        metrics = evaluate(pred, truth, threshold=threshold)
        for name in ("set_accuracy", "element_accuracy", "mse"):
            if abs(metrics.summary()[name] - c[name]) > tol:
                problems.append(f"{c['model']} w={c['width']} {c['mode']}: {name} "
                                f"{c[name]!r} != recomputed {metrics.summary()[name]!r}")
    recomputed = compare_modes(report)
    if len(recomputed) != len(report.get("comparison", [])):
        problems.append("comparison table row count differs from recomputation")
    else:
        for stored, fresh in zip(report.get("comparison", []), recomputed):
            for key in ("delta_set_accuracy", "delta_element_accuracy", "delta_mse"):
                if (stored["model"], stored["width"]) != (fresh["model"], fresh["width"]) \
                        or abs(stored[key] - fresh[key]) > tol:
                    problems.append(f"comparison {stored['model']} w={stored['width']} {key} differs")
    accounting = report["accounting"]
    if accounting["run"] + accounting["skipped"] != accounting["grid_size"] \
            or len(report["cells"]) != accounting["grid_size"]:
        problems.append("cell accounting does not sum to the grid size")
    return problems


def ensure_finite(report: dict) -> None:
    for c in report["cells"]:
        if c["status"] == "run" and not np.isfinite(c["mse"]):
            raise NumericalError(f"{c['model']} w={c['width']}: non-finite MSE")


def ingest_to_file(gtd_path: str, out_path: str, icfg: IngestConfig) -> tuple[int, int]:
    with open(gtd_path, "rb") as fh:
        parsed = parse_events(fh, unknown_date_policy=icfg.unknown_date_policy)
    kept = filter_events(parsed.events, icfg)
    with open(out_path, "w", newline="") as fh:
        write_events(kept, fh)
    return len(kept), len(parsed.warnings)


def catalog_from_file(path: str) -> FeatureCatalog:
    with open(path) as fh:
        return FeatureCatalog.from_dict(json.load(fh))
