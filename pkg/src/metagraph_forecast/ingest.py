"""Parsing and filtering of GTD-schema event CSVs.

Raw GTD extracts carry ~135 columns; only date, country, the doubt flag and
the tactic/weapon/target category slots are kept.
"""
from __future__ import annotations

import csv
import datetime as dt
import io
import logging
from dataclasses import dataclass, field
from typing import IO, Iterable, Mapping

from .errors import ConfigError, SchemaError

log = logging.getLogger(__name__)

TACTIC_SLOTS = 3
WEAPON_SLOTS = 4
TARGET_SLOTS = 3

DEFAULT_SCHEMA: dict[str, str] = {
    "event_id": "eventid",
    "year": "iyear",
    "month": "imonth",
    "day": "iday",
    "country": "country_txt",
    "doubt": "doubtterr",
    **{f"tactic{i}": f"attacktype{i}_txt" for i in range(1, TACTIC_SLOTS + 1)},
    **{f"weapon{i}": f"weaptype{i}_txt" for i in range(1, WEAPON_SLOTS + 1)},
    **{f"target{i}": f"targtype{i}_txt" for i in range(1, TARGET_SLOTS + 1)},
}

UNKNOWN_DATE_POLICIES = ("drop", "clamp_to_first_of_month")
CANONICAL_COLUMNS = ["event_id", "date", "country", "doubt", "tactics", "weapons", "targets"]


@dataclass(frozen=True)
class EventRecord:
    event_id: str
    date: dt.date
    country: str
    doubt_flag: bool = False
    tactics: tuple[str, ...] = ()
    weapons: tuple[str, ...] = ()
    targets: tuple[str, ...] = ()

    def __post_init__(self):
        # lists are accepted for convenience but stored as tuples
        for name in ("tactics", "weapons", "targets"):
            value = tuple(getattr(self, name))
            if any(not c for c in value):
                raise ValueError(f"{name} contains an empty category")
            object.__setattr__(self, name, value)


@dataclass(frozen=True)
class IngestConfig:
    country: str
    window_start: dt.date = dt.date(2001, 1, 1)
    window_end: dt.date = dt.date(2018, 12, 31)
    exclude_doubtful: bool = True
    unknown_date_policy: str = "drop"

    def __post_init__(self):
        if self.window_start > self.window_end:
            raise ConfigError(f"window_start {self.window_start} is after window_end {self.window_end}")
        if self.unknown_date_policy not in UNKNOWN_DATE_POLICIES:
            raise ConfigError(f"unknown_date_policy must be one of {UNKNOWN_DATE_POLICIES}")


@dataclass
class RowWarning:
    row: int  # 1-based data row number (header excluded)
    action: str  # "dropped" or "modified"
    message: str


@dataclass
class ParseResult:
    events: list[EventRecord]
    warnings: list[RowWarning] = field(default_factory=list)

    @property
    def dropped(self) -> int:
        return sum(w.action == "dropped" for w in self.warnings)


def _cell(row: Mapping[str, str], column: str) -> str:
    value = row.get(column)
    return "" if value is None else value.strip()


def _as_int(text: str) -> int:
    # GTD exports sometimes write integers as "9.0"
    number = float(text)
    if number != int(number):
        raise ValueError(text)
    return int(number)


def _categories(row, schema, prefix, slots):
    out = []
    for i in range(1, slots + 1):
        value = _cell(row, schema[f"{prefix}{i}"])
        if value and value.lower() != "nan":
            out.append(value)
    return tuple(out)


def parse_events(
    csv_stream: IO[bytes] | IO[str],
    schema_map: Mapping[str, str] | None = None,
    unknown_date_policy: str = "drop",
) -> ParseResult:
    """Parse a GTD-layout CSV into EventRecords.

    Rows with an unknown month or day (coded 0) are dropped or clamped to
    the first of the month per ``unknown_date_policy``; a month of 0 cannot
    be clamped and is always dropped. Every dropped or modified row yields
    exactly one warning.
    """
    if unknown_date_policy not in UNKNOWN_DATE_POLICIES:
        raise ConfigError(f"unknown_date_policy must be one of {UNKNOWN_DATE_POLICIES}")
    schema = dict(DEFAULT_SCHEMA)
    if schema_map:
        schema.update(schema_map)

    if isinstance(csv_stream, io.TextIOBase):
        text = csv_stream
    else:
        text = io.TextIOWrapper(csv_stream, encoding="utf-8-sig", newline="")
    reader = csv.DictReader(text)
    if reader.fieldnames is None:
        raise SchemaError("input has no header row")
    header = {name.strip() for name in reader.fieldnames}
    missing = sorted(col for col in schema.values() if col not in header)
    if missing:
        raise SchemaError(f"missing required columns: {', '.join(missing)}")
    reader.fieldnames = [name.strip() for name in reader.fieldnames]

    result = ParseResult(events=[])
    for n, row in enumerate(reader, start=1):
        try:
            year = _as_int(_cell(row, schema["year"]))
            month = _as_int(_cell(row, schema["month"]))
            day = _as_int(_cell(row, schema["day"]))
        except ValueError:
            result.warnings.append(RowWarning(n, "dropped", "unparseable date fields"))
            continue

        modified = None
        if month == 0 or day == 0:
            if unknown_date_policy == "drop" or month == 0:
                result.warnings.append(
                    RowWarning(n, "dropped", f"unknown date {year}-{month:02d}-{day:02d}")
                )
                continue
            modified = f"unknown day clamped to {year}-{month:02d}-01"
            day = 1
        try:
            date = dt.date(year, month, day)
        except ValueError:
            result.warnings.append(RowWarning(n, "dropped", f"invalid date {year}-{month}-{day}"))
            continue

        doubt = _cell(row, schema["doubt"])
        try:
            doubt_flag = doubt != "" and _as_int(doubt) == 1
        except ValueError:
            doubt_flag = False

        result.events.append(
            EventRecord(
                event_id=_cell(row, schema["event_id"]),
                date=date,
                country=_cell(row, schema["country"]),
                doubt_flag=doubt_flag,
                tactics=_categories(row, schema, "tactic", TACTIC_SLOTS),
                weapons=_categories(row, schema, "weapon", WEAPON_SLOTS),
                targets=_categories(row, schema, "target", TARGET_SLOTS),
            )
        )
        if modified:
            result.warnings.append(RowWarning(n, "modified", modified))

    if result.warnings:
        log.info("parsed %d events, %d rows dropped, %d modified", len(result.events),
                 result.dropped, len(result.warnings) - result.dropped)
    return result


def sort_events(events: Iterable[EventRecord]) -> list[EventRecord]:
    return sorted(events, key=lambda e: (e.date, e.event_id))


def filter_events(events: Iterable[EventRecord], cfg: IngestConfig) -> list[EventRecord]:
    kept = [
        e for e in events
        if e.country == cfg.country
        and cfg.window_start <= e.date <= cfg.window_end
        and not (cfg.exclude_doubtful and e.doubt_flag)
    ]
    return sort_events(kept)


def write_events(events: Iterable[EventRecord], stream: IO[str]) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(CANONICAL_COLUMNS)
    for e in events:
        writer.writerow([
            e.event_id, e.date.isoformat(), e.country, int(e.doubt_flag),
            "|".join(e.tactics), "|".join(e.weapons), "|".join(e.targets),
        ])


def read_events(stream: IO[str]) -> list[EventRecord]:
    reader = csv.DictReader(stream)
    if reader.fieldnames is None or set(CANONICAL_COLUMNS) - set(reader.fieldnames):
        raise SchemaError(f"canonical event file must have columns {CANONICAL_COLUMNS}")
    events = []
    for n, row in enumerate(reader, start=1):
        try:
            date = dt.date.fromisoformat(row["date"])
        except ValueError as exc:
            raise SchemaError(f"row {n}: bad date {row['date']!r}") from exc
        split = lambda s: tuple(c for c in s.split("|") if c)  # noqa: E731
        events.append(EventRecord(
            event_id=row["event_id"], date=date, country=row["country"],
            doubt_flag=row["doubt"].strip() in ("1", "true", "True"),
            tactics=split(row["tactics"]), weapons=split(row["weapons"]),
            targets=split(row["targets"]),
        ))
    return events
