"""Forecast metrics over top-2 target sets.

Element-wise accuracy scores a unit 1 when the predicted and empirical
top-2 sets intersect; set-wise accuracy scores the overlap fraction. Units
whose empirical set is empty are scored by the no-attack rule: correct iff
every predicted centrality is below ``threshold``.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import IO, Sequence

import numpy as np

from .errors import ShapeError

DEFAULT_THRESHOLD = 0.1
TOP_K = 2


def _check_shapes(pred, truth):
    pred, truth = np.asarray(pred, float), np.asarray(truth, float)
    if pred.shape != truth.shape:
        raise ShapeError(f"prediction shape {pred.shape} differs from truth shape {truth.shape}")
    return pred, truth


def clamp(pred) -> np.ndarray:
    return np.clip(np.asarray(pred, dtype=np.float64), 0.0, 1.0)


def mse(pred, truth) -> float:
    pred, truth = _check_shapes(pred, truth)
    if pred.size == 0:
        raise ValueError("mse of an empty array")
    return float(np.mean((clamp(pred) - truth) ** 2))


def _top(values: np.ndarray, candidates: np.ndarray, k: int) -> frozenset[int]:
    # stable sort on -value keeps catalog order among ties
    idx = candidates[np.argsort(-values[candidates], kind="stable")]
    return frozenset(int(i) for i in idx[:k])


def empirical_top_set(truth_row, k: int = TOP_K) -> frozenset[int]:
    """Indices of the k largest strictly positive values."""
    row = np.asarray(truth_row, dtype=np.float64)
    return _top(row, np.flatnonzero(row > 0), k)


def predicted_top_set(pred_row, threshold: float = DEFAULT_THRESHOLD, k: int = TOP_K) -> frozenset[int]:
    """Empty when every value is below threshold, else the indices of the k largest."""
    row = clamp(pred_row)
    if row.size == 0 or np.all(row < threshold):
        return frozenset()
    return _top(row, np.arange(row.size), k)


def element_wise(actual, predicted) -> int:
    if not actual:
        return int(not predicted)
    return int(bool(set(actual) & set(predicted)))


def set_wise(actual, predicted) -> float:
    if not actual:
        return float(not predicted)
    return len(set(actual) & set(predicted)) / len(actual)


def aggregate(values: Sequence[float]) -> float:
    values = list(values)
    if not values:
        raise ValueError("cannot aggregate over an empty test set")
    return float(np.mean(values))


def _pearson_rows(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # exact constancy test; a centered norm picks up rounding residue
    flagged = (np.ptp(a, axis=1) == 0) | (np.ptp(b, axis=1) == 0)

    def unit_rows(m):
        c = m - m.mean(axis=1, keepdims=True)
        # rescale first so tiny rows do not underflow (Pearson is scale-free)
        scale = np.abs(c).max(axis=1, keepdims=True)
        c = c / np.where(scale > 0, scale, 1.0)
        norm = np.sqrt((c ** 2).sum(axis=1, keepdims=True))
        return c / np.where(norm > 0, norm, 1.0)

    r = (unit_rows(a) * unit_rows(b)).sum(axis=1)
    r = np.where(flagged, 0.0, r)
    return np.clip(r, -1.0, 1.0), flagged


@dataclass
class CorrelationSummary:
    per_unit: np.ndarray
    flagged: np.ndarray  # constant prediction or truth vector; value reported as 0
    mean: float
    sd: float


def per_unit_prediction_correlation(pred, truth) -> CorrelationSummary:
    """Pearson correlation of each unit's predicted vs. empirical target vector.

    Summary statistics skip flagged (constant-vector) units.
    """
    pred, truth = _check_shapes(pred, truth)
    if pred.ndim != 2 or pred.shape[1] < 2:
        raise ShapeError("need at least two targets per unit to correlate")
    r, flagged = _pearson_rows(clamp(pred), truth)
    valid = r[~flagged]
    mean = float(valid.mean()) if valid.size else 0.0
    sd = float(valid.std()) if valid.size else 0.0
    return CorrelationSummary(r, flagged, mean, sd)


@dataclass
class UnitRecord:
    unit: int
    element_accuracy: int
    set_accuracy: float
    actual_top: frozenset[int]
    predicted_top: frozenset[int]
    no_attack: bool
    correlation: float
    correlation_flagged: bool


@dataclass
class MetricsReport:
    set_accuracy: float
    element_accuracy: float
    mse: float
    threshold: float
    target_names: list[str]
    units: list[UnitRecord] = field(default_factory=list)
    frequencies: dict[str, tuple[int, int]] = field(default_factory=dict)
    correlation_mean: float = 0.0
    correlation_sd: float = 0.0

    def summary(self) -> dict:
        return {"set_accuracy": self.set_accuracy, "element_accuracy": self.element_accuracy,
                "mse": self.mse, "threshold": self.threshold, "n_units": len(self.units),
                "correlation_mean": self.correlation_mean,
                "correlation_sd": self.correlation_sd}

    def to_dict(self) -> dict:
        names = self.target_names
        return {
            **self.summary(),
            "target_names": names,
            "units": [{"unit": r.unit, "element_accuracy": r.element_accuracy, "set_accuracy": r.set_accuracy,
                       "actual_top": [names[i] for i in sorted(r.actual_top)],
                       "predicted_top": [names[i] for i in sorted(r.predicted_top)],
                       "no_attack": r.no_attack, "correlation": r.correlation,
                       "correlation_flagged": r.correlation_flagged} for r in self.units],
            "frequencies": {k: {"empirical": e, "predicted": p}
                            for k, (e, p) in self.frequencies.items()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def write_units_csv(self, stream: IO[str], unit_dates: Sequence[str] | None = None) -> None:
        names = self.target_names
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["unit", "unit_start_date", "element_accuracy", "set_accuracy", "no_attack",
                         "actual_top", "predicted_top", "correlation", "correlation_flagged"])
        for i, r in enumerate(self.units):
            writer.writerow([r.unit, unit_dates[i] if unit_dates else "", r.element_accuracy,
                             repr(r.set_accuracy), int(r.no_attack),
                             "|".join(names[j] for j in sorted(r.actual_top)),
                             "|".join(names[j] for j in sorted(r.predicted_top)),
                             f"{r.correlation:.6f}", int(r.correlation_flagged)])

    def write_frequencies_csv(self, stream: IO[str]) -> None:
        writer = csv.writer(stream, lineterminator="\n")
        writer.writerow(["target", "empirical_count", "predicted_count"])
        for name, (e, p) in self.frequencies.items():
            writer.writerow([name, e, p])


def top_target_frequencies(units: Sequence[UnitRecord],
                           target_names: Sequence[str]) -> dict[str, tuple[int, int]]:
    empirical = np.zeros(len(target_names), dtype=int)
    predicted = np.zeros(len(target_names), dtype=int)
    for r in units:
        for i in r.actual_top:
            empirical[i] += 1
        for i in r.predicted_top:
            predicted[i] += 1
    return {name: (int(e), int(p)) for name, e, p in zip(target_names, empirical, predicted)}


def evaluate(pred, truth, target_names: Sequence[str] | None = None, threshold: float = DEFAULT_THRESHOLD,
             unit_index: Sequence[int] | None = None, attacks: Sequence[int] | None = None) -> MetricsReport:
    """Score raw predictions against empirical target centralities.

    ``attacks`` (attacks per evaluated unit) only feeds the ``no_attack``
    diagnostic flag; scoring itself depends on the empirical top set.
    """
    pred, truth = _check_shapes(pred, truth)
    if pred.ndim != 2:
        raise ShapeError(f"expected (units, targets) arrays, got {pred.shape}")
    n, k = pred.shape
    names = list(target_names) if target_names is not None else [f"y{i}" for i in range(k)]
    unit_index = list(unit_index) if unit_index is not None else list(range(n))
    clamped = clamp(pred)
    if k >= 2:
        corr = per_unit_prediction_correlation(pred, truth)
    else:
        corr = CorrelationSummary(np.zeros(n), np.ones(n, bool), 0.0, 0.0)

    units = []
    for i in range(n):
        actual = empirical_top_set(truth[i])
        predicted = predicted_top_set(clamped[i], threshold)
        no_attack = (attacks[i] == 0) if attacks is not None else not actual
        units.append(UnitRecord(int(unit_index[i]), element_wise(actual, predicted),
                                set_wise(actual, predicted), actual, predicted, bool(no_attack),
                                float(corr.per_unit[i]), bool(corr.flagged[i])))
    return MetricsReport(
        set_accuracy=aggregate(r.set_accuracy for r in units),
        element_accuracy=aggregate(r.element_accuracy for r in units),
        mse=mse(pred, truth),
        threshold=threshold,
        target_names=names,
        units=units,
        frequencies=top_target_frequencies(units, names),
        correlation_mean=corr.mean,
        correlation_sd=corr.sd,
    )
