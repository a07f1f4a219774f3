"""Two-day count tensors, per-dimension meta-graphs and centrality series."""
from __future__ import annotations

import csv
import datetime as dt
import hashlib
import json
import math
from dataclasses import dataclass
from typing import IO, Sequence

import numpy as np

from .errors import DataError, SchemaError
from .ingest import EventRecord

DIMENSIONS = ("tactics", "weapons", "targets")
MODES = ("meta_graph", "shallow")
UNIT_DAYS = 2


@dataclass(frozen=True)
class FeatureCatalog:
    tactics: tuple[str, ...] = ()
    weapons: tuple[str, ...] = ()
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        for name in DIMENSIONS:
            object.__setattr__(self, name, tuple(getattr(self, name)))
        names = self.feature_names
        if len(set(names)) != len(names):
            raise ValueError("feature names must be unique across dimensions")

    @property
    def n_dimensions(self) -> int:
        return len(DIMENSIONS)

    @property
    def feature_names(self) -> list[str]:
        return [*self.tactics, *self.weapons, *self.targets]

    @property
    def n_features(self) -> int:
        return len(self.tactics) + len(self.weapons) + len(self.targets)

    def dimension(self, name: str) -> tuple[str, ...]:
        return getattr(self, name)

    def dimension_slice(self, name: str) -> slice:
        start = 0
        for dim in DIMENSIONS:
            size = len(self.dimension(dim))
            if dim == name:
                return slice(start, start + size)
            start += size
        raise KeyError(name)

    @property
    def target_slice(self) -> slice:
        return self.dimension_slice("targets")

    def to_dict(self) -> dict:
        return {dim: list(self.dimension(dim)) for dim in DIMENSIONS}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, data: dict) -> "FeatureCatalog":
        try:
            return cls(**{dim: tuple(data[dim]) for dim in DIMENSIONS})
        except KeyError as exc:
            raise SchemaError(f"catalog is missing {exc.args[0]!r}") from exc

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class CountTensor:
    window_start: dt.date
    n_days: int
    counts: dict[str, np.ndarray]  # dimension -> int64 array (U, 2, |I|)
    attacks_per_unit: np.ndarray  # (U,) int64

    @property
    def n_units(self) -> int:
        return len(self.attacks_per_unit)

    def unit_dates(self, u: int) -> tuple[dt.date, dt.date]:
        first = self.window_start + dt.timedelta(days=UNIT_DAYS * u)
        return first, first + dt.timedelta(days=1)


@dataclass
class CentralitySeries:
    mode: str
    values: np.ndarray  # (U, F) float64 in [0, 1]
    catalog: FeatureCatalog
    attacks_per_unit: np.ndarray
    window_start: dt.date

    @property
    def n_units(self) -> int:
        return self.values.shape[0]

    @property
    def targets(self) -> np.ndarray:
        return self.values[:, self.catalog.target_slice]

    def unit_start(self, u: int) -> dt.date:
        return self.window_start + dt.timedelta(days=UNIT_DAYS * u)


def n_units(window_start: dt.date, window_end: dt.date) -> int:
    total_days = (window_end - window_start).days + 1
    return math.ceil(total_days / UNIT_DAYS)


def _unit_of(date: dt.date, window_start: dt.date) -> int:
    return (date - window_start).days // UNIT_DAYS


def mangle_duplicates(dimension_lists: Sequence[Sequence[str]]) -> list[list[str]]:
    """Rename repeats across dimensions the way pandas dedupes columns.

    The k-th repeat of a name (scanning tactics, then weapons, then targets)
    gets the suffix ``.k``: a third "Unknown" becomes "Unknown.2".
    """
    seen: dict[str, int] = {}
    out = []
    for names in dimension_lists:
        renamed = []
        for name in names:
            k = seen.get(name, 0)
            seen[name] = k + 1
            renamed.append(name if k == 0 else f"{name}.{k}")
        out.append(renamed)
    return out


def build_catalog(events: Sequence[EventRecord], min_presence: int = 10,
                  window_start: dt.date | None = None) -> FeatureCatalog:
    """Features present (nonzero count) in at least ``min_presence`` two-day units.

    Units are anchored at ``window_start`` (default: the earliest event date).
    Order is first appearance in the event stream; duplicate names across
    dimensions are disambiguated before filtering so names stay stable.
    """
    if min_presence < 0:
        raise ValueError("min_presence must be >= 0")
    if not events:
        return FeatureCatalog()
    if window_start is None:
        window_start = min(e.date for e in events)

    order: dict[str, list[str]] = {dim: [] for dim in DIMENSIONS}
    units: dict[str, dict[str, set[int]]] = {dim: {} for dim in DIMENSIONS}
    for e in events:
        u = _unit_of(e.date, window_start)
        for dim in DIMENSIONS:
            for name in getattr(e, dim):
                if name not in units[dim]:
                    units[dim][name] = set()
                    order[dim].append(name)
                units[dim][name].add(u)

    renamed = mangle_duplicates([order[dim] for dim in DIMENSIONS])
    kept = {}
    for dim, raw_names, new_names in zip(DIMENSIONS, (order[d] for d in DIMENSIONS), renamed):
        kept[dim] = tuple(new for raw, new in zip(raw_names, new_names)
                          if len(units[dim][raw]) >= min_presence)
    return FeatureCatalog(**kept)


def _raw_name_maps(catalog: FeatureCatalog, events: Sequence[EventRecord]) -> dict[str, dict[str, int]]:
    """Map raw category strings to catalog column indices per dimension."""
    order: dict[str, list[str]] = {dim: [] for dim in DIMENSIONS}
    seen: dict[str, set] = {dim: set() for dim in DIMENSIONS}
    for e in events:
        for dim in DIMENSIONS:
            for name in getattr(e, dim):
                if name not in seen[dim]:
                    seen[dim].add(name)
                    order[dim].append(name)
    # catalog names may carry a disambiguation suffix that the raw strings lack;
    # recover the raw name by reproducing the mangling on the catalog itself
    maps = {}
    mangled = mangle_duplicates([order[dim] for dim in DIMENSIONS])
    for dim, raws, news in zip(DIMENSIONS, (order[d] for d in DIMENSIONS), mangled):
        index = {name: i for i, name in enumerate(catalog.dimension(dim))}
        maps[dim] = {raw: index[new] for raw, new in zip(raws, news) if new in index}
        # raw names that match the catalog verbatim (catalog built elsewhere)
        for raw in raws:
            if raw not in maps[dim] and raw in index:
                maps[dim][raw] = index[raw]
    return maps


def build_count_tensor(events: Sequence[EventRecord], catalog: FeatureCatalog,
                       window_start: dt.date, window_end: dt.date) -> CountTensor:
    U = n_units(window_start, window_end)
    counts = {dim: np.zeros((U, UNIT_DAYS, len(catalog.dimension(dim))), dtype=np.int64)
              for dim in DIMENSIONS}
    attacks = np.zeros(U, dtype=np.int64)
    maps = _raw_name_maps(catalog, events)
    for e in events:
        if not window_start <= e.date <= window_end:
            raise DataError(f"event {e.event_id} on {e.date} lies outside "
                            f"{window_start}..{window_end}")
        offset = (e.date - window_start).days
        u, d = divmod(offset, UNIT_DAYS)
        attacks[u] += 1
        for dim in DIMENSIONS:
            lookup = maps[dim]
            for name in getattr(e, dim):
                i = lookup.get(name)
                if i is not None:
                    counts[dim][u, d, i] += 1
    n_days = (window_end - window_start).days + 1
    return CountTensor(window_start, n_days, counts, attacks)


def meta_graph(D: np.ndarray) -> np.ndarray:
    """Co-occurrence (Gram) matrix DᵀD of a day-by-feature count matrix."""
    D = np.asarray(D, dtype=np.int64)
    return D.T @ D


def degree_centrality(G: np.ndarray) -> np.ndarray:
    """Weighted degree with the diagonal excluded."""
    G = np.asarray(G)
    return G.sum(axis=1) - np.diagonal(G)


def normalize_centrality(degree: np.ndarray) -> np.ndarray:
    """Divide by the maximum; a zero maximum gives all zeros."""
    degree = np.asarray(degree, dtype=np.float64)
    if degree.size == 0:
        return degree
    top = degree.max()
    if top <= 0:
        return np.zeros_like(degree)
    return degree / top


def _normalize_rows(values: np.ndarray) -> np.ndarray:
    values = values.astype(np.float64)
    top = values.max(axis=1, keepdims=True) if values.shape[1] else np.zeros((len(values), 1))
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.where(top > 0, values / np.where(top > 0, top, 1.0), 0.0)
    return out


def build_series(tensor: CountTensor, catalog: FeatureCatalog, mode: str = "meta_graph") -> CentralitySeries:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    blocks = []
    for dim in DIMENSIONS:
        D = tensor.counts[dim]  # (U, 2, n)
        if mode == "meta_graph":
            # batched Gram matrices, then degree without the diagonal
            G = np.einsum("udi,udj->uij", D, D)
            raw = G.sum(axis=2) - np.einsum("uii->ui", G)
        else:
            raw = D.sum(axis=1)
        blocks.append(_normalize_rows(raw))
    values = np.concatenate(blocks, axis=1) if blocks else np.zeros((tensor.n_units, 0))
    return CentralitySeries(mode, values, catalog, tensor.attacks_per_unit.copy(), tensor.window_start)


def feature_correlation(series: CentralitySeries | np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pearson correlation among feature columns.

    Returns the F×F matrix and a boolean flag per column marking constant
    columns, whose correlations (diagonal included) are reported as 0.
    """
    values = series.values if isinstance(series, CentralitySeries) else np.asarray(series, float)
    if values.shape[0] < 2:
        raise ValueError("need at least two units to correlate")
    centered = values - values.mean(axis=0)
    norms = np.sqrt((centered ** 2).sum(axis=0))
    constant = np.ptp(values, axis=0) == 0
    safe = np.where(constant, 1.0, norms)
    corr = (centered.T @ centered) / np.outer(safe, safe)
    corr[constant, :] = 0.0
    corr[:, constant] = 0.0
    np.clip(corr, -1.0, 1.0, out=corr)
    return corr, constant


def series_header(catalog: FeatureCatalog) -> list[str]:
    return ["unit_start_date", *catalog.feature_names, "attacks_per_unit"]


def write_series(series: CentralitySeries, stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(series_header(series.catalog))
    for u in range(series.n_units):
        writer.writerow([series.unit_start(u).isoformat(),
                         *(f"{v:.6f}" for v in series.values[u]),
                         int(series.attacks_per_unit[u])])


def read_series(stream: IO[str], catalog: FeatureCatalog, mode: str = "meta_graph") -> CentralitySeries:
    reader = csv.reader(stream)
    header = next(reader, None)
    expected = series_header(catalog)
    if header != expected:
        raise SchemaError("series header does not match the catalog feature order")
    rows = list(reader)
    if not rows:
        raise SchemaError("series file has no units")
    values = np.array([[float(v) for v in r[1:-1]] for r in rows], dtype=np.float64)
    attacks = np.array([int(r[-1]) for r in rows], dtype=np.int64)
    start = dt.date.fromisoformat(rows[0][0])
    return CentralitySeries(mode, values, catalog, attacks, start)


def write_correlation(corr: np.ndarray, constant: np.ndarray, catalog: FeatureCatalog,
                      stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    names = catalog.feature_names
    writer.writerow(["feature", "constant", *names])
    for name, flag, row in zip(names, constant, corr):
        writer.writerow([name, int(flag), *(f"{v:.6f}" for v in row)])
