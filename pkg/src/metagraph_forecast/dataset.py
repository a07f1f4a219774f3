"""Chronological splits and sliding-window supervised examples."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from typing import IO

import numpy as np

from .errors import ConfigError
from .features import CentralitySeries

log = logging.getLogger(__name__)

INPUT_WIDTHS = (1, 5, 15, 30)
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.70
    val_frac: float = 0.20
    test_frac: float = 0.10

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if any(f < 0 for f in fracs) or not math.isclose(sum(fracs), 1.0, abs_tol=1e-9):
            raise ConfigError(f"split fractions must be nonnegative and sum to 1, got {fracs}")

    def boundaries(self, U: int) -> tuple[int, int]:
        # the small epsilon keeps e.g. 0.7 * 10 from flooring to 6
        a = math.floor(self.train_frac * U + 1e-9)
        b = math.floor((self.train_frac + self.val_frac) * U + 1e-9)
        return a, b


@dataclass(frozen=True)
class Segment:
    """A contiguous [start, stop) range of units of one series."""
    series: CentralitySeries
    split: str
    start: int
    stop: int

    def __len__(self):
        return self.stop - self.start

    @property
    def values(self) -> np.ndarray:
        return self.series.values[self.start:self.stop]


@dataclass
class WindowedDataset:
    input_width: int
    split: str
    inputs: np.ndarray  # (N, w, F)
    labels: np.ndarray  # (N, |Y|)
    label_unit_index: np.ndarray  # (N,) absolute unit indices
    target_names: list[str] = field(default_factory=list)

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.inputs.shape[2]


def split_series(series: CentralitySeries, spec: SplitSpec = SplitSpec()) -> tuple[Segment, Segment, Segment]:
    U = series.n_units
    if U < 10:
        raise ConfigError(f"series has {U} units; at least 10 are needed to split")
    a, b = spec.boundaries(U)
    return (Segment(series, "train", 0, a), Segment(series, "val", a, b),
            Segment(series, "test", b, U))


def make_windows(segment: Segment, w: int, label_source: CentralitySeries | None = None) -> WindowedDataset:
    """Stride-1 windows inside one segment; the label is the next unit's targets.

    Inputs come from the segment's own series (meta-graph or shallow); labels
    always come from ``label_source``, which must be meta-graph centralities.
    """
    if w < 1:
        raise ConfigError("input width must be positive")
    label_source = label_source if label_source is not None else segment.series
    if label_source.n_units != segment.series.n_units:
        raise ConfigError("label source and input series differ in length")
    targets = label_source.catalog.targets
    F = segment.series.values.shape[1]
    n = len(segment) - w
    if n <= 0:
        log.warning("%s segment of length %d is too short for width %d", segment.split, len(segment), w)
        return WindowedDataset(w, segment.split, np.zeros((0, w, F)), np.zeros((0, len(targets))),
                               np.zeros(0, dtype=np.int64), list(targets))
    values = segment.values
    index = np.arange(n)[:, None] + np.arange(w)[None, :]
    inputs = values[index]
    label_idx = segment.start + w + np.arange(n)
    labels = label_source.targets[label_idx]
    return WindowedDataset(w, segment.split, inputs, labels, label_idx, list(targets))


def build_datasets(series: CentralitySeries, w: int, label_source: CentralitySeries | None = None,
                   spec: SplitSpec = SplitSpec()) -> dict[str, WindowedDataset]:
    return {seg.split: make_windows(seg, w, label_source) for seg in split_series(series, spec)}


def write_dataset(ds: WindowedDataset, stream: IO[str]) -> None:
    """One example per row: label unit, flattened input (time-major), label."""
    w, F = ds.input_width, ds.n_features
    writer = csv.writer(stream, lineterminator="\n")
    header = ["label_unit"]
    header += [f"x_t{t}_f{f}" for t in range(w) for f in range(F)]
    header += [f"y_{name}" for name in ds.target_names]
    writer.writerow(header)
    for x, y, u in zip(ds.inputs, ds.labels, ds.label_unit_index):
        writer.writerow([int(u), *(repr(float(v)) for v in x.ravel()), *(repr(float(v)) for v in y)])
