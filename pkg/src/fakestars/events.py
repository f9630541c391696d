"""Ingestion of GHArchive-style event streams and basic time/type aggregations."""

from __future__ import annotations

import gzip
import io
import json
import logging
from collections import Counter
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Iterator, NamedTuple

log = logging.getLogger(__name__)

UTC = timezone.utc
DAY = timedelta(days=1)

STAR = "Star"
PUSH = "Push"
FORK = "Fork"
CREATE = "Create"
ISSUE = "Issue"
PR = "PR"
COMMENT = "Comment"
OTHER = "Other"

EVENT_CLASSES = (STAR, PUSH, FORK, CREATE, ISSUE, PR, COMMENT, OTHER)

_KIND_TO_CLASS = {
    "WatchEvent": STAR,
    "PushEvent": PUSH,
    "ForkEvent": FORK,
    "CreateEvent": CREATE,
    "IssuesEvent": ISSUE,
    "PullRequestEvent": PR,
    "IssueCommentEvent": COMMENT,
    "CommitCommentEvent": COMMENT,
    "PullRequestReviewCommentEvent": COMMENT,
}

MALFORMED_LIMIT = 0.5


class CorruptInputError(ValueError):
    """More than half of the records in a stream could not be parsed."""


class SubjectNotFound(KeyError):
    pass


def classify_event(event_kind: str) -> str:
    return _KIND_TO_CLASS.get(event_kind, OTHER)


def parse_time(value: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime, truncated to seconds."""
    if not isinstance(value, str) or not value:
        raise ValueError(f"bad timestamp: {value!r}")
    text = value.strip()
    if text.endswith("Z") or text.endswith("z"):
        text = text[:-1] + "+00:00"
    ts = datetime.fromisoformat(text)
    if ts.tzinfo is None:
        ts = ts.replace(tzinfo=UTC)
    return ts.astimezone(UTC).replace(microsecond=0)


def format_time(ts: datetime) -> str:
    return ts.astimezone(UTC).strftime("%Y-%m-%dT%H:%M:%SZ")


class MonthKey(NamedTuple):
    year: int
    month: int

    @classmethod
    def of(cls, ts: datetime) -> "MonthKey":
        ts = ts.astimezone(UTC)
        return cls(ts.year, ts.month)

    @classmethod
    def parse(cls, text: str) -> "MonthKey":
        year, month = text.split("-")[:2]
        return cls(int(year), int(month))

    def start(self) -> datetime:
        return datetime(self.year, self.month, 1, tzinfo=UTC)

    def next(self) -> "MonthKey":
        if self.month == 12:
            return MonthKey(self.year + 1, 1)
        return MonthKey(self.year, self.month + 1)

    def index(self) -> int:
        return self.year * 12 + self.month - 1

    def __str__(self) -> str:
        return f"{self.year:04d}-{self.month:02d}"


def month_range(first: MonthKey, last: MonthKey) -> list[MonthKey]:
    """Inclusive list of calendar months from ``first`` to ``last``."""
    out = []
    cur = first
    while cur <= last:
        out.append(cur)
        cur = cur.next()
    return out


def add_months(ts: datetime, months: int) -> datetime:
    total = ts.year * 12 + ts.month - 1 + months
    year, month0 = divmod(total, 12)
    month = month0 + 1
    # clamp the day for short months
    nxt = datetime(year + (month == 12), month % 12 + 1, 1, tzinfo=ts.tzinfo)
    last_day = (nxt - DAY).day
    return ts.replace(year=year, month=month, day=min(ts.day, last_day))


@dataclass(frozen=True)
class Window:
    """Half-open observation interval ``[start, end)`` in UTC."""

    start: datetime
    end: datetime

    def __post_init__(self):
        if self.end <= self.start:
            raise ValueError(f"empty window: {self.start} .. {self.end}")

    def __contains__(self, ts: datetime) -> bool:
        return self.start <= ts < self.end

    @classmethod
    def parse(cls, start: str, end: str) -> "Window":
        return cls(parse_time(start), parse_time(end))

    def months(self) -> list[MonthKey]:
        return month_range(MonthKey.of(self.start), MonthKey.of(self.end - timedelta(seconds=1)))


@dataclass(frozen=True, slots=True)
class RawEvent:
    actor_id: str
    repo_id: str
    event_kind: str
    timestamp: datetime

    @property
    def event_class(self) -> str:
        return classify_event(self.event_kind)

    def to_record(self) -> dict:
        return {
            "type": self.event_kind,
            "actor": {"login": self.actor_id},
            "repo": {"name": self.repo_id},
            "created_at": format_time(self.timestamp),
        }


@dataclass(frozen=True, slots=True)
class StarEvent:
    actor_id: str
    repo_id: str
    timestamp: datetime


def _record_to_event(rec: dict) -> RawEvent:
    actor = rec["actor"]
    repo = rec["repo"]
    actor_id = actor["login"] if isinstance(actor, dict) else None
    repo_id = repo["name"] if isinstance(repo, dict) else None
    kind = rec["type"]
    if not (isinstance(actor_id, str) and actor_id):
        raise ValueError("missing actor.login")
    if not (isinstance(repo_id, str) and repo_id):
        raise ValueError("missing repo.name")
    if not (isinstance(kind, str) and kind):
        raise ValueError("missing type")
    return RawEvent(actor_id, repo_id, kind, parse_time(rec["created_at"]))


@dataclass(frozen=True)
class EventStore:
    """Immutable, time-ordered collection of events with per-actor and per-repo indices.

    Build one with :func:`parse_event_stream` or :meth:`EventStore.from_events`.
    """

    events: tuple[RawEvent, ...]
    window: Window | None
    malformed_count: int = 0
    by_actor: dict[str, tuple[int, ...]] = field(default_factory=dict, repr=False, compare=False)
    by_repo: dict[str, tuple[int, ...]] = field(default_factory=dict, repr=False, compare=False)
    stars: tuple[StarEvent, ...] = field(default=(), repr=False, compare=False)
    stars_by_repo: dict[str, tuple[StarEvent, ...]] = field(default_factory=dict, repr=False, compare=False)

    @classmethod
    def from_events(
        cls, events: Iterable[RawEvent], window: Window | None = None, malformed_count: int = 0
    ) -> "EventStore":
        evs = list(events)
        if window is not None:
            evs = [e for e in evs if e.timestamp in window]
        # stable: ties keep input order
        evs.sort(key=lambda e: e.timestamp)
        by_actor: dict[str, list[int]] = {}
        by_repo: dict[str, list[int]] = {}
        stars: list[StarEvent] = []
        seen: set[tuple[str, str]] = set()
        for i, e in enumerate(evs):
            by_actor.setdefault(e.actor_id, []).append(i)
            by_repo.setdefault(e.repo_id, []).append(i)
            if e.event_kind == "WatchEvent":
                pair = (e.actor_id, e.repo_id)
                if pair not in seen:
                    seen.add(pair)
                    stars.append(StarEvent(e.actor_id, e.repo_id, e.timestamp))
        stars_by_repo: dict[str, list[StarEvent]] = {}
        for s in stars:
            stars_by_repo.setdefault(s.repo_id, []).append(s)
        return cls(
            events=tuple(evs),
            window=window,
            malformed_count=malformed_count,
            by_actor={k: tuple(v) for k, v in by_actor.items()},
            by_repo={k: tuple(v) for k, v in by_repo.items()},
            stars=tuple(stars),
            stars_by_repo={k: tuple(v) for k, v in stars_by_repo.items()},
        )

    def __len__(self) -> int:
        return len(self.events)

    @property
    def actors(self) -> list[str]:
        return sorted(self.by_actor)

    @property
    def repos(self) -> list[str]:
        return sorted(self.by_repo)

    def actor_events(self, actor_id: str) -> list[RawEvent]:
        return [self.events[i] for i in self.by_actor.get(actor_id, ())]

    def repo_events(self, repo_id: str) -> list[RawEvent]:
        return [self.events[i] for i in self.by_repo.get(repo_id, ())]

    def span(self) -> Window | None:
        """The store's window, or the tightest window around its events."""
        if self.window is not None:
            return self.window
        if not self.events:
            return None
        return Window(self.events[0].timestamp, self.events[-1].timestamp + timedelta(seconds=1))


def _open_text(source) -> tuple[IO[str], bool]:
    owned = isinstance(source, (str, bytes)) or hasattr(source, "__fspath__")
    raw = open(source, "rb") if owned else source
    if hasattr(raw, "peek"):
        head = raw.peek(2)[:2]
    else:
        data = raw.read()
        head = data[:2]
        raw = io.BytesIO(data)
    if head == b"\x1f\x8b":
        raw = gzip.GzipFile(fileobj=raw)
    return io.TextIOWrapper(raw, encoding="utf-8", errors="replace"), owned


def iter_records(lines: Iterable[str]) -> Iterator[tuple[RawEvent | None, str]]:
    for line in lines:
        text = line.strip()
        if not text:
            continue
        try:
            yield _record_to_event(json.loads(text)), text
        except (ValueError, KeyError, TypeError, AttributeError):
            yield None, text


def parse_event_stream(source, window: Window | None = None) -> EventStore:
    """Parse newline-delimited GHArchive records (optionally gzipped) into an EventStore.

    ``source`` is a path or a binary file object. Malformed lines are counted and
    skipped; if more than half of the non-blank lines are malformed the input is
    assumed to be the wrong kind of file and :class:`CorruptInputError` is raised.
    Events outside ``window`` are dropped silently.
    """
    fh, owned = _open_text(source)
    good: list[RawEvent] = []
    bad = 0
    total = 0
    try:
        for ev, _ in iter_records(fh):
            total += 1
            if ev is None:
                bad += 1
            else:
                good.append(ev)
    finally:
        if owned:
            fh.close()
        else:
            fh.detach()
    if total and bad / total > MALFORMED_LIMIT:
        raise CorruptInputError(f"{bad} of {total} lines malformed")
    if bad:
        log.warning("skipped %d malformed lines of %d", bad, total)
    return EventStore.from_events(good, window=window, malformed_count=bad)


def parse_event_streams(sources: Iterable, window: Window | None = None) -> EventStore:
    events: list[RawEvent] = []
    malformed = 0
    for src in sources:
        store = parse_event_stream(src, window=window)
        events.extend(store.events)
        malformed += store.malformed_count
    return EventStore.from_events(events, window=window, malformed_count=malformed)


def dump_event_stream(store: EventStore | Iterable[RawEvent], fh: IO[str]) -> int:
    """Write events as GHArchive-subset JSON lines. Returns the number written."""
    events = store.events if isinstance(store, EventStore) else store
    n = 0
    for e in events:
        fh.write(json.dumps(e.to_record(), sort_keys=True, separators=(",", ":")))
        fh.write("\n")
        n += 1
    return n


def activity_duration(store: EventStore, subject: str) -> int:
    """Whole days between the first and last event of an actor or repo.

    Repository ids contain a slash; anything else is looked up as an actor.
    A subject with a single event has duration 0 (one day of activity).
    """
    index = store.by_repo if "/" in subject else store.by_actor
    idx = index.get(subject)
    if not idx:
        raise SubjectNotFound(subject)
    first = store.events[idx[0]].timestamp
    last = store.events[idx[-1]].timestamp
    return (last - first) // DAY


def monthly_star_counts(store: EventStore, repo: str) -> dict[MonthKey, int]:
    counts = Counter(MonthKey.of(s.timestamp) for s in store.stars_by_repo.get(repo, ()))
    return dict(sorted(counts.items()))
