from datetime import datetime, timedelta, timezone

import pytest

from fakestars.events import EventStore, RawEvent

UTC = timezone.utc
T0 = datetime(2024, 1, 1, tzinfo=UTC)


def ts(day: float = 0.0, base: datetime = T0) -> datetime:
    return base + timedelta(days=day)


def ev(actor: str, repo: str, kind: str = "WatchEvent", day: float = 0.0) -> RawEvent:
    return RawEvent(actor, repo, kind, ts(day))


def store_of(*events: RawEvent, window=None) -> EventStore:
    return EventStore.from_events(events, window=window)


@pytest.fixture
def make_store():
    return store_of


# ---------------------------------------------------------------- acceptance summary

_CRITERIA: dict[int, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    number, title = marker
    failed = report.failed
    if report.when == "call" or failed:
        prev = _CRITERIA.get(number, (title, "PASS"))[1]
        status = "FAIL" if failed or prev == "FAIL" else ("SKIP" if report.skipped else "PASS")
        _CRITERIA[number] = (title, status)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status = _CRITERIA[number]
        terminalreporter.write_line(f"[{status}] criterion {number}: {title}")
