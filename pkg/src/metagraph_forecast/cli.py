"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data error,
3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import datetime as dt
import json
import logging
import sys
from pathlib import Path

from .dataset import SPLITS, build_datasets, write_dataset
from .errors import ConfigError, DataError, NumericalError, PipelineError
from .evaluate import evaluate
from .features import (MODES, build_catalog, build_count_tensor, build_series, feature_correlation,
                       read_series, write_correlation, write_series)
from .harness import (ExperimentConfig, _write_predictions, catalog_from_file, compare_modes,
                      ingest_to_file, run_grid, verify, write_comparison)
from .ingest import IngestConfig, read_events, write_events
from .models import MODEL_KINDS, ModelSpec, build, load_model, save_model, train, write_history
from .synth import planted_rule_spec, synthesize

log = logging.getLogger("metagraph_forecast")

MODE_ALIASES = {"meta": "meta_graph", "meta_graph": "meta_graph", "shallow": "shallow"}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _date(text):
    try:
        return dt.date.fromisoformat(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an ISO date: {text!r}") from None


def _mode(text):
    try:
        return MODE_ALIASES[text]
    except KeyError:
        raise argparse.ArgumentTypeError(f"mode must be meta or shallow, got {text!r}") from None


def _load_config(path) -> dict:
    if not path:
        return {}
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _pick(args, conf: dict, name: str, default=None):
    """Flag value if given, else config value, else default."""
    value = getattr(args, name, None)
    if value is not None:
        return value
    return conf.get(name, default)


def _read_events(path):
    try:
        with open(path, newline="") as fh:
            return read_events(fh)
    except OSError as exc:
        raise DataError(f"cannot read events {path}: {exc}") from exc


def _load_series(args, conf):
    catalog = catalog_from_file(_pick(args, conf, "catalog"))
    mode = _pick(args, conf, "mode", "meta_graph")
    with open(args.series, newline="") as fh:
        series = read_series(fh, catalog, MODE_ALIASES.get(mode, mode))
    labels = series
    if args.labels:
        with open(args.labels, newline="") as fh:
            labels = read_series(fh, catalog, "meta_graph")
    return catalog, series, labels


def cmd_ingest(args, conf):
    icfg = IngestConfig(
        country=_pick(args, conf, "country"),
        window_start=args.start or _date(conf.get("window_start", "2001-01-01")),
        window_end=args.end or _date(conf.get("window_end", "2018-12-31")),
        exclude_doubtful=not args.keep_doubtful and conf.get("exclude_doubtful", True),
        unknown_date_policy=_pick(args, conf, "unknown_date_policy", "drop"),
    )
    if not icfg.country:
        raise ConfigError("--country is required")
    kept, warned = ingest_to_file(args.input, args.output, icfg)
    print(f"wrote {kept} events to {args.output} ({warned} row warnings)")


def cmd_features(args, conf):
    events = _read_events(args.events)
    if not events:
        raise DataError("event file is empty")
    start = args.start or (_date(conf["window_start"]) if "window_start" in conf else events[0].date)
    end = args.end or (_date(conf["window_end"]) if "window_end" in conf else max(e.date for e in events))
    if args.catalog:
        catalog = catalog_from_file(args.catalog)
    else:
        catalog = build_catalog(events, _pick(args, conf, "min_presence", 10), start)
    tensor = build_count_tensor(events, catalog, start, end)
    series = build_series(tensor, catalog, args.mode)
    Path(args.catalog_out).write_text(catalog.to_json())
    with open(args.series_out, "w", newline="") as fh:
        write_series(series, fh)
    if args.correlation_out:
        corr, constant = feature_correlation(series)
        with open(args.correlation_out, "w", newline="") as fh:
            write_correlation(corr, constant, catalog, fh)
    print(f"units={tensor.n_units} features={catalog.n_features} (tactics={len(catalog.tactics)}, "
          f"weapons={len(catalog.weapons)}, targets={len(catalog.targets)}) mode={args.mode}")


def cmd_dataset(args, conf):
    _, series, labels = _load_series(args, conf)
    ds = build_datasets(series, args.width, label_source=labels)[args.split]
    with open(args.out, "w", newline="") as fh:
        write_dataset(ds, fh)
    print(f"wrote {len(ds)} {args.split} examples (width {args.width}, {ds.n_features} features) "
          f"to {args.out}")


def cmd_train(args, conf):
    catalog, series, labels = _load_series(args, conf)
    ds = build_datasets(series, args.width, label_source=labels)
    spec = ModelSpec(
        args.model, args.width, catalog.n_features, len(catalog.targets),
        seed=_pick(args, conf, "seed", 0), epochs=_pick(args, conf, "epochs", 100),
        batch_size=_pick(args, conf, "batch_size", 16), patience=_pick(args, conf, "patience", 10),
        learning_rate=_pick(args, conf, "learning_rate", 0.001),
    )
    model = build(spec)
    trained = train(model, ds["train"], ds["val"])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "checkpoint.json", "w") as fh:
        save_model(model, fh, catalog.digest(), extra={"mode": series.mode})
    with open(out / "history.csv", "w", newline="") as fh:
        write_history(trained, fh)
    print(f"trained {args.model} width {args.width}: stopped at epoch {trained.stopped_epoch}, "
          f"best val MSE {trained.best_val_mse:.6f}" if trained.history else
          f"{args.model} needs no training")


def cmd_evaluate(args, conf):
    catalog, series, labels = _load_series(args, conf)
    with open(args.checkpoint) as fh:
        model, payload = load_model(fh)
    if payload["catalog_hash"] != catalog.digest():
        raise DataError("checkpoint was trained on a different feature catalog")
    test = build_datasets(series, model.spec.input_width, label_source=labels)["test"]
    pred = model.predict(test.inputs)
    threshold = _pick(args, conf, "threshold", 0.1)
    report = evaluate(pred, test.labels, list(catalog.targets), threshold, unit_index=test.label_unit_index,
                      attacks=labels.attacks_per_unit[test.label_unit_index])
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.json").write_text(report.to_json())
    dates = [labels.unit_start(int(u)).isoformat() for u in test.label_unit_index]
    with open(out / "units.csv", "w", newline="") as fh:
        report.write_units_csv(fh, dates)
    with open(out / "frequencies.csv", "w", newline="") as fh:
        report.write_frequencies_csv(fh)
    _write_predictions(out / "predictions.csv", test.label_unit_index, pred, test.labels, catalog.targets)
    print(f"set_acc={report.set_accuracy:.4f} elem_acc={report.element_accuracy:.4f} MSE={report.mse:.4f} "
          f"over {len(report.units)} test units")


def cmd_grid(args, conf):
    overrides = {
        "events": args.events, "gtd_csv": args.gtd_csv, "country": args.country,
        "window_start": args.start.isoformat() if args.start else None,
        "window_end": args.end.isoformat() if args.end else None,
        "min_presence": args.min_presence, "threshold": args.threshold, "seed": args.seed,
        "models": args.models, "widths": args.widths,
        "modes": [_mode(m) for m in args.modes] if args.modes else None,
        "epochs": args.epochs, "output_dir": args.output, "workers": args.workers,
    }
    merged = {**conf, **{k: v for k, v in overrides.items() if v is not None}}
    cfg = ExperimentConfig.from_dict(merged)
    report = run_grid(cfg)
    acc = report["accounting"]
    print(f"grid: {acc['run']} cells run, {acc['skipped']} skipped of {acc['grid_size']}; "
          f"report in {Path(cfg.output_dir) / 'grid_report.json'}")
    for c in report["cells"]:
        if c["status"] == "run":
            print(f"  {c['model']:<9} w={c['width']:<3} {c['mode']:<10} "
                  f"set_acc={c['set_accuracy']:.4f} elem_acc={c['element_accuracy']:.4f} MSE={c['mse']:.4f}")


def cmd_compare(args, conf):
    try:
        with open(args.report) as fh:
            report = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataError(f"cannot read report {args.report}: {exc}") from exc
    rows = compare_modes(report)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            write_comparison(rows, fh)
    else:
        write_comparison(rows, sys.stdout)


def cmd_synth(args, conf):
    spec = planted_rule_spec(n_units=args.units, n_events=args.events, switch_prob=args.switch_prob,
                             quiet_prob=args.quiet_prob)
    if args.start:
        spec = dataclasses.replace(spec, start=args.start)
    result = synthesize(spec, args.seed)
    with open(args.out, "w", newline="") as fh:
        write_events(result.events, fh)
    if args.config_out:
        cfg = {"events": str(args.out), "country": spec.country,
               "window_start": spec.start.isoformat(), "window_end": spec.end.isoformat()}
        Path(args.config_out).write_text(json.dumps(cfg, indent=2) + "\n")
    print(f"wrote {len(result.events)} synthetic events over {spec.n_units} units to {args.out}")


def cmd_verify(args, conf):
    problems = verify(args.dir, tol=args.tol)
    if problems:
        for p in problems:
            print(f"MISMATCH {p}", file=sys.stderr)
        raise NumericalError(f"{len(problems)} recomputed values disagree with the report")
    print("verify: all metrics recomputed within tolerance")


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="metagraph-forecast",
                description="Temporal meta-graph features and next-unit target forecasting")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def add(name, fn, help_):
        sp = sub.add_parser(name, help=help_)
        sp.add_argument("--config", help="JSON config; flags override its values")
        sp.set_defaults(func=fn)
        return sp

    sp = add("ingest", cmd_ingest, "GTD-layout CSV -> filtered canonical event CSV")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--country")
    sp.add_argument("--start", type=_date)
    sp.add_argument("--end", type=_date)
    sp.add_argument("--keep-doubtful", action="store_true")
    sp.add_argument("--unknown-date-policy", choices=["drop", "clamp_to_first_of_month"])

    sp = add("features", cmd_features, "events -> catalog JSON + series CSV")
    sp.add_argument("--events", required=True)
    sp.add_argument("--mode", type=_mode, default="meta_graph", help="meta or shallow")
    sp.add_argument("--catalog", help="reuse an existing catalog instead of building one")
    sp.add_argument("--catalog-out", required=True)
    sp.add_argument("--series-out", required=True)
    sp.add_argument("--correlation-out")
    sp.add_argument("--min-presence", type=int)
    sp.add_argument("--start", type=_date)
    sp.add_argument("--end", type=_date)

    def series_args(sp):
        sp.add_argument("--series", required=True, help="input series CSV")
        sp.add_argument("--catalog", required=True)
        sp.add_argument("--labels", help="meta-graph series for labels (default: --series)")
        sp.add_argument("--mode", type=_mode, help="mode of --series (meta or shallow)")

    sp = add("dataset", cmd_dataset, "series -> windowed example dump")
    series_args(sp)
    sp.add_argument("--width", type=int, required=True)
    sp.add_argument("--split", choices=SPLITS, default="train")
    sp.add_argument("--out", required=True)

    sp = add("train", cmd_train, "train one model on one series")
    series_args(sp)
    sp.add_argument("--model", choices=MODEL_KINDS, required=True)
    sp.add_argument("--width", type=int, required=True)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--batch-size", type=int)
    sp.add_argument("--patience", type=int)
    sp.add_argument("--learning-rate", type=float)
    sp.add_argument("--out", required=True)

    sp = add("evaluate", cmd_evaluate, "checkpoint + series -> metrics on the test split")
    series_args(sp)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--out", required=True)

    sp = add("grid", cmd_grid, "run the full experiment grid")
    sp.add_argument("--events")
    sp.add_argument("--gtd-csv")
    sp.add_argument("--country")
    sp.add_argument("--start", type=_date)
    sp.add_argument("--end", type=_date)
    sp.add_argument("--min-presence", type=int)
    sp.add_argument("--threshold", type=float)
    sp.add_argument("--seed", type=int)
    sp.add_argument("--models", nargs="+", choices=MODEL_KINDS)
    sp.add_argument("--widths", nargs="+", type=int)
    sp.add_argument("--modes", nargs="+")
    sp.add_argument("--epochs", type=int)
    sp.add_argument("--workers", type=int)
    sp.add_argument("--output")

    sp = add("compare", cmd_compare, "grid report -> meta vs shallow comparison CSV")
    sp.add_argument("--report", required=True)
    sp.add_argument("--out")

    sp = add("synth", cmd_synth, "write a synthetic planted-rule event fixture")
    sp.add_argument("--out", required=True)
    sp.add_argument("--units", type=int, default=600)
    sp.add_argument("--events", type=int, default=5000)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--switch-prob", type=float, default=0.5)
    sp.add_argument("--quiet-prob", type=float, default=0.0)
    sp.add_argument("--start", type=_date)
    sp.add_argument("--config-out")

    sp = add("verify", cmd_verify, "recompute report metrics from persisted predictions")
    sp.add_argument("--dir", required=True)
    sp.add_argument("--tol", type=float, default=1e-12)
    return p


def main(argv=None) -> int:
    parser = make_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # usage errors and --help
        return exc.code if isinstance(exc.code, int) else 1
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        conf = _load_config(args.config)
        args.func(args, conf)
    except PipelineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    return 0
