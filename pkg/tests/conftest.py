import csv
import io

import pytest

GTD_HEADER = (["eventid", "iyear", "imonth", "iday", "country_txt", "doubtterr"]
              + [f"attacktype{i}_txt" for i in range(1, 4)]
              + [f"weaptype{i}_txt" for i in range(1, 5)]
              + [f"targtype{i}_txt" for i in range(1, 4)])


def gtd_csv(rows):
    """Build a GTD-layout CSV byte stream from dicts of column -> value."""
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=GTD_HEADER, lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow({k: row.get(k, "") for k in GTD_HEADER})
    return io.BytesIO(buf.getvalue().encode())


@pytest.fixture
def make_gtd():
    return gtd_csv


_acceptance = []


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(label): exit criterion reported in the summary")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.skipped):
        return
    label = next((m for m in getattr(report, "acceptance_labels", [])), None)
    if label:
        outcome = "PASS" if report.passed else "SKIP" if report.skipped else "FAIL"
        _acceptance.append((label, outcome))


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    rep.acceptance_labels = [m.args[0] for m in item.iter_markers("acceptance")]


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for label, outcome in sorted(_acceptance):
        terminalreporter.write_line(f"{outcome:<4} {label}")
