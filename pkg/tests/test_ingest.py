import datetime as dt
import io

import pytest
from hypothesis import given, strategies as st

from metagraph_forecast.errors import ConfigError, SchemaError
from metagraph_forecast.ingest import (EventRecord, IngestConfig, filter_events, parse_events,
                                       read_events, write_events)


def row(eid, y=2005, m=3, d=4, country="Afghanistan", doubt=0, **extra):
    return {"eventid": eid, "iyear": y, "imonth": m, "iday": d, "country_txt": country,
            "doubtterr": doubt, **extra}


def test_direct_field_mapping(make_gtd):
    res = parse_events(make_gtd([row("1", 2001, 9, 11, "United States", 0,
                                     attacktype1_txt="Hijacking")]))
    assert res.warnings == []
    (e,) = res.events
    assert e.date == dt.date(2001, 9, 11)
    assert e.doubt_flag is False
    assert e.tactics == ("Hijacking",)
    assert e.weapons == () and e.targets == ()


def test_unknown_month_dropped_with_one_warning(make_gtd):
    res = parse_events(make_gtd([row("1", m=0), row("2")]))
    assert [e.event_id for e in res.events] == ["2"]
    assert len(res.warnings) == 1 and res.warnings[0].action == "dropped"


def test_clamp_policy_moves_unknown_day_to_first(make_gtd):
    res = parse_events(make_gtd([row("1", m=7, d=0), row("2", m=0, d=0)]),
                       unknown_date_policy="clamp_to_first_of_month")
    assert [e.date for e in res.events] == [dt.date(2005, 7, 1)]
    assert sorted(w.action for w in res.warnings) == ["dropped", "modified"]


def test_doubt_filter_deferred(make_gtd):
    rows = [row(str(i), doubt=int(i == 2)) for i in range(5)]
    res = parse_events(make_gtd(rows))
    assert len(res.events) == 5
    assert [e.doubt_flag for e in res.events] == [False, False, True, False, False]


def test_empty_and_whitespace_cells_omitted(make_gtd):
    res = parse_events(make_gtd([row("1", attacktype1_txt=" Armed Assault ", attacktype2_txt="",
                                     weaptype1_txt="Firearms", weaptype3_txt="Explosives",
                                     targtype1_txt="Police")]))
    e = res.events[0]
    assert e.tactics == ("Armed Assault",)
    assert e.weapons == ("Firearms", "Explosives")
    assert e.targets == ("Police",)


def test_missing_column_is_fatal():
    stream = io.BytesIO(b"eventid,iyear,imonth\n1,2001,1\n")
    with pytest.raises(SchemaError, match="iday"):
        parse_events(stream)


def test_schema_map_renames_columns(make_gtd):
    raw = make_gtd([row("1")]).getvalue().decode().replace("country_txt", "country")
    res = parse_events(io.BytesIO(raw.encode()), {"country": "country"})
    assert res.events[0].country == "Afghanistan"


def test_unparseable_and_invalid_dates_warn(make_gtd):
    res = parse_events(make_gtd([row("1", y="abc"), row("2", m=2, d=30), row("3")]))
    assert [e.event_id for e in res.events] == ["3"]
    assert len(res.warnings) == 2


@given(st.lists(st.tuples(st.integers(0, 12), st.integers(0, 31)), max_size=30))
def test_parsed_plus_dropped_equals_rows(dates):
    from conftest import gtd_csv
    rows = [row(str(i), m=m, d=d) for i, (m, d) in enumerate(dates)]
    res = parse_events(gtd_csv(rows))
    assert len(res.events) + res.dropped == len(rows)


def ev(eid, date, country="Afghanistan", doubt=False):
    return EventRecord(eid, date, country, doubt, ("Bombing/Explosion",), (), ("Police",))


def test_filter_country_window_doubt_and_order():
    cfg = IngestConfig("Afghanistan", dt.date(2001, 1, 1), dt.date(2001, 12, 31))
    events = [
        ev("b", dt.date(2001, 5, 1)),
        ev("a", dt.date(2001, 5, 1)),
        ev("c", dt.date(2000, 12, 31)),
        ev("d", dt.date(2001, 3, 1), country="Iraq"),
        ev("e", dt.date(2001, 2, 1), doubt=True),
        ev("f", dt.date(2001, 12, 31)),
    ]
    assert [e.event_id for e in filter_events(events, cfg)] == ["a", "b", "f"]
    keep = IngestConfig("Afghanistan", dt.date(2001, 1, 1), dt.date(2001, 12, 31), exclude_doubtful=False)
    assert [e.event_id for e in filter_events(events, keep)] == ["e", "a", "b", "f"]


def test_filter_empty():
    assert filter_events([], IngestConfig("Iraq")) == []


def test_config_window_validated():
    with pytest.raises(ConfigError):
        IngestConfig("Iraq", dt.date(2002, 1, 1), dt.date(2001, 1, 1))


@given(st.lists(st.tuples(st.sampled_from(["Afghanistan", "Iraq"]), st.integers(0, 800),
                          st.booleans(), st.integers(0, 50)), max_size=40))
def test_filter_idempotent_and_sorted(spec):
    events = [ev(str(n), dt.date(2000, 6, 1) + dt.timedelta(days=d), c, doubt)
              for c, d, doubt, n in spec]
    cfg = IngestConfig("Afghanistan", dt.date(2001, 1, 1), dt.date(2001, 12, 31))
    once = filter_events(events, cfg)
    assert filter_events(once, cfg) == once
    assert once == sorted(once, key=lambda e: (e.date, e.event_id))


def test_canonical_round_trip():
    events = [EventRecord("1", dt.date(2010, 1, 2), "Iraq", False, ("Armed Assault",),
                          ("Firearms", "Explosives"), ("Police", "Military"))]
    buf = io.StringIO()
    write_events(events, buf)
    assert buf.getvalue().splitlines()[0] == "event_id,date,country,doubt,tactics,weapons,targets"
    assert buf.getvalue().splitlines()[1] == "1,2010-01-02,Iraq,0,Armed Assault,Firearms|Explosives,Police|Military"
    buf.seek(0)
    assert read_events(buf) == events
