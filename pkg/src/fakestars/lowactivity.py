"""Low-activity signature: accounts that star one repository and then go quiet."""

from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from datetime import datetime
from typing import IO, Iterable

from .events import EventStore, format_time, parse_time

DEFAULT_MIN_FAKE = 50


@dataclass(frozen=True, order=True)
class LowActivityFlag:
    actor_id: str
    starred_repo: str
    star_time: datetime
    extra_event_kind: str | None = None


def _flag_actor(events) -> LowActivityFlag | None:
    if not 1 <= len(events) <= 2:
        return None
    watches = [e for e in events if e.event_kind == "WatchEvent"]
    if len(watches) != 1:
        return None
    star = watches[0]
    extra = None
    if len(events) == 2:
        other = events[0] if events[1] is star else events[1]
        if other.repo_id != star.repo_id or other.timestamp.date() != star.timestamp.date():
            return None
        extra = other.event_kind
    return LowActivityFlag(star.actor_id, star.repo_id, star.timestamp, extra)


def detect_low_activity(store: EventStore) -> set[LowActivityFlag]:
    """Flag accounts whose whole history is one WatchEvent plus at most one more
    event on the same repository and the same UTC day."""
    flags = set()
    for actor, idx in store.by_actor.items():
        if len(idx) > 2:
            continue
        flag = _flag_actor([store.events[i] for i in idx])
        if flag is not None:
            flags.add(flag)
    return flags


def filter_by_repo_threshold(
    flags: Iterable[LowActivityFlag], min_fake: int = DEFAULT_MIN_FAKE
) -> set[LowActivityFlag]:
    """Keep flags on repositories that collect at least ``min_fake`` of them."""
    if min_fake < 1:
        raise ValueError("min_fake must be >= 1")
    flags = list(flags)
    per_repo = Counter(f.starred_repo for f in flags)
    return {f for f in flags if per_repo[f.starred_repo] >= min_fake}


CSV_FIELDS = ["actor_id", "repo_id", "star_time", "extra_event_kind"]


def write_flags_csv(flags: Iterable[LowActivityFlag], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for f in sorted(flags):
        w.writerow([f.actor_id, f.starred_repo, format_time(f.star_time), f.extra_event_kind or ""])


def read_flags_csv(fh: IO[str]) -> set[LowActivityFlag]:
    return {
        LowActivityFlag(r["actor_id"], r["repo_id"], parse_time(r["star_time"]), r["extra_event_kind"] or None)
        for r in csv.DictReader(fh)
    }
