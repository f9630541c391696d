"""External lookups: entity existence (deletion ratios) and cross-reference joins."""

from __future__ import annotations

import csv
import logging
import os
import threading
import time
from collections import Counter, defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import IO, Iterable

import requests

from .events import MonthKey

log = logging.getLogger(__name__)

EXISTS = "exists"
DELETED = "deleted"
UNKNOWN = "unknown"

TOKEN_ENV = "GITHUB_TOKEN"


def normalize_repo(repo_id: str) -> str:
    return repo_id.strip().strip("/").lower()


class ExistenceProvider:
    """Answers exists / deleted / unknown for a repo ("owner/name") or account id.

    Subclasses implement :meth:`_lookup`; answers are memoised per instance and
    lookups are safe to issue from several threads.
    """

    def __init__(self):
        self._cache: dict[str, str] = {}
        self._lock = threading.Lock()

    def _lookup(self, entity_id: str) -> str:
        raise NotImplementedError

    def status(self, entity_id: str) -> str:
        with self._lock:
            if entity_id in self._cache:
                return self._cache[entity_id]
        try:
            answer = self._lookup(entity_id)
        except Exception as exc:  # provider failures never turn into answers
            log.warning("lookup failed for %s: %s", entity_id, exc)
            answer = UNKNOWN
        if answer not in (EXISTS, DELETED, UNKNOWN):
            raise ValueError(f"provider returned {answer!r} for {entity_id}")
        with self._lock:
            self._cache.setdefault(entity_id, answer)
            return self._cache[entity_id]


class FixtureProvider(ExistenceProvider):
    """Existence answers from a CSV with columns ``entity_id,status``; missing ids are unknown."""

    def __init__(self, table: dict[str, str]):
        super().__init__()
        self.table = {k.lower(): v for k, v in table.items()}
        self.calls = 0

    @classmethod
    def from_csv(cls, fh: IO[str]) -> "FixtureProvider":
        table = {}
        for row in csv.DictReader(fh):
            status = row["status"].strip().lower()
            if status not in (EXISTS, DELETED):
                raise ValueError(f"bad status {status!r} for {row['entity_id']}")
            table[row["entity_id"].strip()] = status
        return cls(table)

    def _lookup(self, entity_id: str) -> str:
        self.calls += 1
        return self.table.get(entity_id.lower(), UNKNOWN)


class GitHubProvider(ExistenceProvider):
    """Live lookups against the GitHub REST API with backoff on rate limiting."""

    def __init__(self, session: requests.Session | None = None, token: str | None = None,
                 base_url: str = "https://api.github.com", max_retries: int = 5, backoff: float = 2.0,
                 sleep=time.sleep):
        super().__init__()
        self.session = session or requests.Session()
        token = token if token is not None else os.environ.get(TOKEN_ENV)
        self.headers = {"Accept": "application/vnd.github+json"}
        if token:
            self.headers["Authorization"] = f"Bearer {token}"
        self.base_url = base_url.rstrip("/")
        self.max_retries = max_retries
        self.backoff = backoff
        self.sleep = sleep

    def _url(self, entity_id: str) -> str:
        if "/" in entity_id:
            return f"{self.base_url}/repos/{entity_id}"
        return f"{self.base_url}/users/{entity_id}"

    def _lookup(self, entity_id: str) -> str:
        delay = self.backoff
        for _ in range(self.max_retries):
            resp = self.session.get(self._url(entity_id), headers=self.headers, timeout=30)
            if resp.status_code == 200:
                return EXISTS
            if resp.status_code in (404, 410, 451):
                return DELETED
            if resp.status_code in (403, 429):
                retry_after = resp.headers.get("Retry-After")
                self.sleep(float(retry_after) if retry_after else delay)
                delay *= 2
                continue
            return UNKNOWN
        return UNKNOWN


@dataclass(frozen=True)
class DeletionCounts:
    deleted: int
    resolved: int
    unknown: int

    @property
    def pct(self) -> float | None:
        return 100.0 * self.deleted / self.resolved if self.resolved else None


@dataclass(frozen=True)
class DeletionRatio:
    detected: DeletionCounts
    baseline: DeletionCounts

    @property
    def pct_deleted_detected(self) -> float | None:
        return self.detected.pct

    @property
    def pct_deleted_baseline(self) -> float | None:
        return self.baseline.pct


def _count(entities: list[str], provider: ExistenceProvider, workers: int) -> DeletionCounts:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            answers = list(pool.map(provider.status, entities))
    else:
        answers = [provider.status(e) for e in entities]
    c = Counter(answers)
    return DeletionCounts(deleted=c[DELETED], resolved=c[DELETED] + c[EXISTS], unknown=c[UNKNOWN])


def deletion_ratio(
    entities: Iterable[str], provider: ExistenceProvider, baseline: Iterable[str], workers: int = 1
) -> DeletionRatio:
    """Percent deleted among resolved detected entities vs. a baseline sample.

    Unknown answers are excluded from both numerator and denominator and
    reported separately.
    """
    return DeletionRatio(
        detected=_count(list(entities), provider, workers),
        baseline=_count(list(baseline), provider, workers),
    )


class TrendingTable:
    """Trending appearances: CSV ``repo_id,month``."""

    def __init__(self, rows: Iterable[tuple[str, MonthKey]]):
        self.rows = [(normalize_repo(r), m) for r, m in rows]

    @classmethod
    def from_csv(cls, fh: IO[str]) -> "TrendingTable":
        return cls((row["repo_id"], MonthKey.parse(row["month"])) for row in csv.DictReader(fh))


class PackageTable:
    """Package-to-repo links: CSV ``package,registry,repo_id``."""

    def __init__(self, rows: Iterable[tuple[str, str, str]]):
        self.rows = [(p, reg, normalize_repo(r)) for p, reg, r in rows]

    @classmethod
    def from_csv(cls, fh: IO[str]) -> "PackageTable":
        return cls((row["package"], row["registry"], row["repo_id"]) for row in csv.DictReader(fh))


@dataclass
class CrossRefResult:
    matched: list[str]  # campaign repo ids, original spelling
    rate: float | None  # matched / campaigns
    per_month: dict[MonthKey, int] | None = None
    per_registry: dict[str, int] | None = None
    n_packages: int | None = None


def cross_reference(campaign_repos: Iterable[str], table: TrendingTable | PackageTable) -> CrossRefResult:
    """Inner join of campaign repos against a trending or package table on normalised ids."""
    repos = sorted(set(campaign_repos))
    norm = {normalize_repo(r): r for r in repos}
    rate = None
    if isinstance(table, TrendingTable):
        months: dict[MonthKey, set[str]] = defaultdict(set)
        hit = set()
        for r, m in table.rows:
            if r in norm:
                hit.add(norm[r])
                months[m].add(norm[r])
        matched = sorted(hit)
        if repos:
            rate = len(matched) / len(repos)
        return CrossRefResult(matched, rate, per_month={m: len(v) for m, v in sorted(months.items())})
    registries: dict[str, set[str]] = defaultdict(set)
    hit = set()
    for pkg, reg, r in table.rows:
        if r in norm:
            hit.add(norm[r])
            registries[reg].add(pkg)
    matched = sorted(hit)
    if repos:
        rate = len(matched) / len(repos)
    per_registry = {reg: len(p) for reg, p in sorted(registries.items())}
    return CrossRefResult(matched, rate, per_registry=per_registry, n_packages=sum(per_registry.values()))
