"""Synthetic star traffic with planted fake-star campaigns, and detection scoring.

Background stars follow a power-law popularity over repositories with uniform
(Poisson-process) timing. Every background account also gets a few ordinary
events so that only planted accounts can look like throw-away accounts.
"""

from __future__ import annotations

import csv
from dataclasses import asdict, dataclass, field
from datetime import datetime
from typing import IO, Iterable

import numpy as np

from .events import EventStore, RawEvent, Window, format_time, parse_time

# kinds used for ordinary background activity, with sampling weights
BACKGROUND_KINDS = (
    ("PushEvent", 0.45),
    ("CreateEvent", 0.12),
    ("IssuesEvent", 0.10),
    ("PullRequestEvent", 0.10),
    ("IssueCommentEvent", 0.13),
    ("ForkEvent", 0.06),
    ("ReleaseEvent", 0.02),
    ("GollumEvent", 0.02),
)
OWN_REPO_KINDS = {"PushEvent", "CreateEvent", "ReleaseEvent", "GollumEvent"}


class ScenarioError(ValueError):
    pass


@dataclass(frozen=True)
class Injection:
    n_fake_accounts: int
    n_target_repos: int
    burst_span_days: float
    stars_per_repo: int
    spread_days: float = 30.0  # all bursts of the campaign start within this span
    camouflage_stars: int = 0
    start: str | None = None  # campaign start; drawn at random when unset

    def validate(self) -> None:
        if min(self.n_fake_accounts, self.n_target_repos, self.stars_per_repo, self.camouflage_stars) < 0:
            raise ScenarioError("injection counts must be >= 0")
        if self.burst_span_days <= 0 or self.spread_days < 0:
            raise ScenarioError("burst_span_days must be positive and spread_days >= 0")
        if self.stars_per_repo > self.n_fake_accounts:
            raise ScenarioError("stars_per_repo cannot exceed n_fake_accounts")


@dataclass(frozen=True)
class ScenarioConfig:
    n_accounts: int = 20000
    n_repos: int = 5000
    star_rate: float = 150.0  # background stars per day
    popularity_skew: float = 1.5
    activity_rate: float = 2.0  # mean extra ordinary events per background account
    start: str = "2024-01-01T00:00:00Z"
    end: str = "2025-01-01T00:00:00Z"
    injections: tuple[Injection, ...] = ()
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "injections", tuple(
            i if isinstance(i, Injection) else Injection(**i) for i in self.injections
        ))

    @property
    def window(self) -> Window:
        return Window.parse(self.start, self.end)

    def validate(self) -> None:
        if self.n_accounts < 1 or self.n_repos < 1:
            raise ScenarioError("need at least one account and one repo")
        if self.star_rate < 0 or self.activity_rate < 0 or self.popularity_skew < 0:
            raise ScenarioError("rates and skew must be >= 0")
        self.window
        total_targets = sum(i.n_target_repos for i in self.injections)
        if total_targets > self.n_repos // 2:
            raise ScenarioError("injections target more repos than the unpopular half holds")
        for inj in self.injections:
            inj.validate()
            if (inj.burst_span_days + inj.spread_days) * 86400 >= (self.window.end - self.window.start).total_seconds():
                raise ScenarioError("campaign longer than the window")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["injections"] = [asdict(i) for i in self.injections]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ScenarioError(f"unknown scenario keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class GroundTruth:
    accounts: set[str] = field(default_factory=set)
    repos: set[str] = field(default_factory=set)
    stars: set[tuple[str, str, datetime]] = field(default_factory=set)

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actor_id", "repo_id", "timestamp"])
        for a, r, t in sorted(self.stars):
            w.writerow([a, r, format_time(t)])

    @classmethod
    def read_csv(cls, fh: IO[str]) -> "GroundTruth":
        gt = cls()
        for row in csv.DictReader(fh):
            gt.stars.add((row["actor_id"], row["repo_id"], parse_time(row["timestamp"])))
            gt.accounts.add(row["actor_id"])
            gt.repos.add(row["repo_id"])
        return gt


def account_name(i: int) -> str:
    return f"user{i:06d}"


def repo_name(j: int) -> str:
    return f"org{j:05d}/project{j:05d}"


def generate(scenario: ScenarioConfig) -> tuple[EventStore, GroundTruth]:
    """Draw a store and its ground truth; a pure function of ``scenario``."""
    scenario.validate()
    rng = np.random.default_rng(scenario.rng_seed)
    win = scenario.window
    t0 = int(win.start.timestamp())
    span = int((win.end - win.start).total_seconds())

    def at(offsets) -> list[datetime]:
        return [datetime.fromtimestamp(t0 + int(o), tz=win.start.tzinfo) for o in offsets]

    events: list[RawEvent] = []

    ranks = np.arange(1, scenario.n_repos + 1, dtype=float)
    weights = ranks ** -scenario.popularity_skew
    weights /= weights.sum()
    days = span / 86400
    n_bg = int(rng.poisson(scenario.star_rate * days))
    repo_idx = rng.choice(scenario.n_repos, size=n_bg, p=weights)
    acct_idx = rng.integers(0, scenario.n_accounts, size=n_bg)
    offsets = rng.integers(0, span, size=n_bg)
    for a, r, ts in zip(acct_idx, repo_idx, at(offsets)):
        events.append(RawEvent(account_name(a), repo_name(r), "WatchEvent", ts))

    kinds = [k for k, _ in BACKGROUND_KINDS]
    kind_p = np.array([p for _, p in BACKGROUND_KINDS])
    kind_p /= kind_p.sum()
    n_extra = 1 + rng.poisson(scenario.activity_rate, size=scenario.n_accounts)
    total_extra = int(n_extra.sum())
    extra_kind = rng.choice(len(kinds), size=total_extra, p=kind_p)
    extra_repo = rng.choice(scenario.n_repos, size=total_extra, p=weights)
    extra_off = rng.integers(0, span, size=total_extra)
    owner = np.repeat(np.arange(scenario.n_accounts), n_extra)
    for a, k, r, ts in zip(owner, extra_kind, extra_repo, at(extra_off)):
        kind = kinds[k]
        name = account_name(a)
        target = f"{name}/sandbox" if kind in OWN_REPO_KINDS else repo_name(r)
        events.append(RawEvent(name, target, kind, ts))

    truth = GroundTruth()
    # planted targets come from the unpopular half, without replacement across campaigns
    tail = np.arange(scenario.n_repos // 2, scenario.n_repos)
    n_targets = sum(i.n_target_repos for i in scenario.injections)
    targets = iter(rng.choice(tail, size=n_targets, replace=False).tolist())
    top = max(1, min(100, scenario.n_repos // 10))
    for c, inj in enumerate(scenario.injections):
        fakes = [f"fake{c:03d}x{i:05d}" for i in range(inj.n_fake_accounts)]
        burst = int(inj.burst_span_days * 86400)
        spread = int(inj.spread_days * 86400)
        if inj.start is not None:
            c0 = int((parse_time(inj.start) - win.start).total_seconds())
        else:
            c0 = int(rng.integers(0, span - burst - spread))
        for _ in range(inj.n_target_repos):
            repo = repo_name(next(targets))
            b0 = c0 + (int(rng.integers(0, spread)) if spread else 0)
            who = rng.choice(len(fakes), size=inj.stars_per_repo, replace=False)
            when = at(b0 + rng.integers(0, burst, size=inj.stars_per_repo))
            truth.repos.add(repo)
            for w, ts in zip(who, when):
                actor = fakes[w]
                events.append(RawEvent(actor, repo, "WatchEvent", ts))
                truth.accounts.add(actor)
                truth.stars.add((actor, repo, ts))
        if inj.camouflage_stars:
            for actor in fakes:
                picks = rng.choice(top, size=min(inj.camouflage_stars, top), replace=False)
                for r, ts in zip(picks, at(rng.integers(0, span, size=len(picks)))):
                    events.append(RawEvent(actor, repo_name(r), "WatchEvent", ts))

    store = EventStore.from_events(events, window=win)
    # keep truth consistent with first-star dedup in the store
    kept = {(s.actor_id, s.repo_id): s.timestamp for s in store.stars}
    truth.stars = {(a, r, kept[(a, r)]) for a, r, _ in truth.stars}
    return store, truth


@dataclass(frozen=True)
class Score:
    precision: float | None
    recall: float | None
    true_positives: int
    n_detected: int
    n_truth: int


def score_sets(detected: Iterable, truth: Iterable) -> Score:
    d, t = set(detected), set(truth)
    tp = len(d & t)
    return Score(
        precision=tp / len(d) if d else None,
        recall=tp / len(t) if t else None,
        true_positives=tp,
        n_detected=len(d),
        n_truth=len(t),
    )


def evaluate_detection(
    truth: GroundTruth,
    repos: Iterable[str] = (),
    accounts: Iterable[str] = (),
    stars: Iterable[tuple[str, str]] = (),
) -> dict[str, Score]:
    """Set precision/recall per entity class; stars are compared as (actor, repo) pairs."""
    return {
        "repos": score_sets(repos, truth.repos),
        "accounts": score_sets(accounts, truth.accounts),
        "stars": score_sets(stars, {(a, r) for a, r, _ in truth.stars}),
    }


def false_flag_rate(store: EventStore, truth: GroundTruth, flagged_repos: Iterable[str]) -> float:
    """Share of background (non-planted, star-receiving) repos that were flagged."""
    background = set(store.stars_by_repo) - truth.repos
    if not background:
        return 0.0
    return len(set(flagged_repos) & background) / len(background)
