import io
from collections import defaultdict
from datetime import timedelta

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fakestars.events import EventStore, RawEvent
from fakestars.lowactivity import (
    LowActivityFlag, detect_low_activity, filter_by_repo_threshold, read_flags_csv, write_flags_csv,
)

from conftest import T0, ev, store_of

KINDS = ["WatchEvent", "ForkEvent", "PushEvent", "IssuesEvent", "WatchEvent"]


def brute_force_low_activity(events) -> set:
    """Direct reading of the rule over each account's full history."""
    history = defaultdict(list)
    for e in events:
        history[e.actor_id].append(e)
    out = set()
    for actor, evs in history.items():
        watches = [e for e in evs if e.event_kind == "WatchEvent"]
        others = [e for e in evs if e.event_kind != "WatchEvent"]
        if len(watches) != 1:
            continue
        w = watches[0]
        if not others:
            out.add(LowActivityFlag(actor, w.repo_id, w.timestamp, None))
        elif len(others) == 1 and others[0].repo_id == w.repo_id and \
                others[0].timestamp.date() == w.timestamp.date():
            out.add(LowActivityFlag(actor, w.repo_id, w.timestamp, others[0].event_kind))
    return out


def random_store(seed: int, n_accounts: int = 1000) -> list[RawEvent]:
    rng = np.random.default_rng(seed)
    events = []
    for a in range(n_accounts):
        n = int(rng.choice([1, 1, 2, 2, 3, 4]))
        base_repo = f"o/r{rng.integers(8)}"
        base_t = T0 + timedelta(seconds=int(rng.integers(0, 60 * 86400)))
        for _ in range(n):
            repo = base_repo if rng.random() < 0.7 else f"o/r{rng.integers(8)}"
            t = base_t + timedelta(seconds=int(rng.integers(-30 * 3600, 30 * 3600)))
            events.append(RawEvent(f"a{a}", repo, KINDS[rng.integers(len(KINDS))], t))
    return events


def test_single_watch_is_flagged():
    flags = detect_low_activity(store_of(ev("a", "o/x")))
    assert flags == {LowActivityFlag("a", "o/x", T0, None)}


def test_watch_plus_same_day_fork_is_flagged():
    flags = detect_low_activity(store_of(ev("a", "o/x", day=0.1), ev("a", "o/x", "ForkEvent", day=0.5)))
    assert {f.extra_event_kind for f in flags} == {"ForkEvent"}


def test_two_watches_on_different_repos_not_flagged():
    assert detect_low_activity(store_of(ev("a", "o/x"), ev("a", "o/y"))) == set()


@pytest.mark.parametrize("extra", [
    ev("a", "o/y", "ForkEvent", day=0.2),  # other repo
    ev("a", "o/x", "ForkEvent", day=1.0),  # next UTC day
])
def test_extra_event_must_share_repo_and_day(extra):
    assert detect_low_activity(store_of(ev("a", "o/x", day=0.1), extra)) == set()


def test_utc_day_boundary_counts_as_different_day():
    late = ev("a", "o/x", day=0.999)
    early = ev("a", "o/x", "PushEvent", day=1.001)
    assert detect_low_activity(store_of(late, early)) == set()


def test_three_events_not_flagged():
    s = store_of(ev("a", "o/x"), ev("a", "o/x", "ForkEvent"), ev("a", "o/x", "PushEvent"))
    assert detect_low_activity(s) == set()


def test_only_non_star_events_not_flagged():
    assert detect_low_activity(store_of(ev("a", "o/x", "ForkEvent"))) == set()


@pytest.mark.parametrize("seed", range(5))
def test_matches_brute_force_on_random_stores(seed):
    events = random_store(seed)
    assert detect_low_activity(EventStore.from_events(events)) == brute_force_low_activity(events)


def _flags(repo: str, n: int) -> set:
    return {LowActivityFlag(f"{repo}-u{i}", repo, T0, None) for i in range(n)}


def test_threshold_boundaries():
    assert filter_by_repo_threshold(_flags("o/a", 49)) == set()
    assert filter_by_repo_threshold(_flags("o/a", 50)) == _flags("o/a", 50)
    mixed = _flags("o/a", 60) | _flags("o/b", 10)
    assert filter_by_repo_threshold(mixed) == _flags("o/a", 60)


def test_threshold_must_be_positive():
    with pytest.raises(ValueError):
        filter_by_repo_threshold(set(), 0)


flag_sets = st.lists(st.tuples(st.integers(0, 30), st.sampled_from(["o/a", "o/b", "o/c"])), max_size=120).map(
    lambda pairs: {LowActivityFlag(f"u{u}", r, T0, None) for u, r in pairs}
)


@settings(max_examples=80)
@given(flag_sets, st.integers(1, 40), st.integers(1, 40))
def test_filter_is_idempotent_and_monotone(flags, a, b):
    lo, hi = sorted((a, b))
    once = filter_by_repo_threshold(flags, lo)
    assert filter_by_repo_threshold(once, lo) == once
    assert filter_by_repo_threshold(flags, hi) <= once


def test_csv_round_trip():
    flags = {LowActivityFlag("a", "o/x", T0, "ForkEvent"), LowActivityFlag("b", "o/x", T0 + timedelta(hours=1))}
    buf = io.StringIO()
    write_flags_csv(flags, buf)
    assert buf.getvalue().splitlines()[0] == "actor_id,repo_id,star_time,extra_event_kind"
    buf.seek(0)
    assert read_flags_csv(buf) == flags
