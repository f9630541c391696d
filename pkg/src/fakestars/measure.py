"""Descriptive analyses: prevalence over time, activity durations, activity-type
clusters and repository-name tokens."""

from __future__ import annotations

import re
from collections import Counter, defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from sklearn.metrics import silhouette_score

from .campaigns import CampaignReport, FakeStarLedger
from .events import EVENT_CLASSES, EventStore, MonthKey, Window, classify_event

POPULAR_MONTHLY_STARS = 50

# five-class view: issues, PRs and comments fold into Other
COLLAPSED_CLASSES = ("Star", "Push", "Fork", "Create", "Other")
_COLLAPSE = np.array([
    [1, 0, 0, 0, 0, 0, 0, 0],
    [0, 1, 0, 0, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0, 0, 0],
    [0, 0, 0, 1, 0, 0, 0, 0],
    [0, 0, 0, 0, 1, 1, 1, 1],
], dtype=float).T


def _pct(num: int, den: int) -> float | None:
    return 100.0 * num / den if den else None


@dataclass(frozen=True)
class PrevalenceRow:
    month: MonthKey
    fake_stars: int
    all_stars: int
    campaign_accounts_active: int
    active_accounts: int
    campaign_repos_popular: int
    popular_repos: int

    @property
    def pct_fake_stars(self) -> float | None:
        return _pct(self.fake_stars, self.all_stars)

    @property
    def pct_campaign_accounts_of_active(self) -> float | None:
        return _pct(self.campaign_accounts_active, self.active_accounts)

    @property
    def pct_campaign_repos_of_popular(self) -> float | None:
        return _pct(self.campaign_repos_popular, self.popular_repos)


def prevalence_series(
    store: EventStore,
    ledger: FakeStarLedger,
    campaigns: Iterable[CampaignReport],
    window: Window | None = None,
    popular_threshold: int = POPULAR_MONTHLY_STARS,
) -> list[PrevalenceRow]:
    """Monthly share of fake stars, campaign accounts among active accounts, and
    campaign repos among repos that got at least ``popular_threshold`` stars."""
    campaigns = list(campaigns)
    window = window or store.span()
    if window is None:
        return []
    camp_repos = {c.repo_id for c in campaigns}
    camp_accounts = set().union(*(c.campaign_accounts for c in campaigns)) if campaigns else set()

    stars = Counter(MonthKey.of(s.timestamp) for s in store.stars)
    repo_month = Counter((MonthKey.of(s.timestamp), s.repo_id) for s in store.stars)
    fake = Counter()
    for e in ledger:
        fake[MonthKey.of(e.timestamp)] += 1
    active: dict[MonthKey, set[str]] = defaultdict(set)
    for e in store.events:
        active[MonthKey.of(e.timestamp)].add(e.actor_id)
    popular: dict[MonthKey, set[str]] = defaultdict(set)
    for (m, r), c in repo_month.items():
        if c >= popular_threshold:
            popular[m].add(r)

    rows = []
    for m in window.months():
        rows.append(PrevalenceRow(
            month=m,
            fake_stars=fake[m],
            all_stars=stars[m],
            campaign_accounts_active=len(active[m] & camp_accounts),
            active_accounts=len(active[m]),
            campaign_repos_popular=len(popular[m] & camp_repos),
            popular_repos=len(popular[m]),
        ))
    return rows


def ccdf(values: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    """Empirical CCDF as a step function: sorted distinct support and P(X > x) at each point."""
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("ccdf of an empty sample")
    support = np.unique(v)
    survival = 1.0 - np.searchsorted(v, support, side="right") / v.size
    return support, survival


def ccdf_at(values: Sequence[float], x: float) -> float:
    v = np.sort(np.asarray(values, dtype=float))
    if v.size == 0:
        raise ValueError("ccdf of an empty sample")
    return 1.0 - np.searchsorted(v, x, side="right") / v.size


@dataclass(frozen=True)
class ActivityVector:
    subject: str
    fractions: np.ndarray


def activity_vectors(store: EventStore, subjects: Iterable[str], collapse: bool = False) -> list[ActivityVector]:
    """L1-normalised event-type mix per actor or repo (repo ids contain a slash).

    Subjects without events are skipped. ``collapse`` folds the eight classes
    down to Star/Push/Fork/Create/Other.
    """
    col = {c: i for i, c in enumerate(EVENT_CLASSES)}
    out = []
    for s in subjects:
        events = store.repo_events(s) if "/" in s else store.actor_events(s)
        if not events:
            continue
        counts = np.zeros(len(EVENT_CLASSES))
        for e in events:
            counts[col[classify_event(e.event_kind)]] += 1
        if collapse:
            counts = counts @ _COLLAPSE
        out.append(ActivityVector(s, counts / counts.sum()))
    return out


@dataclass
class ClusterResult:
    k: int
    centers: np.ndarray
    labels: np.ndarray
    inertia: float
    silhouette: float | None
    history: list[float]  # objective after each assignment step


def _kmeanspp(X: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [X[rng.integers(len(X))]]
    d2 = ((X - centers[0]) ** 2).sum(1)
    for _ in range(1, k):
        total = d2.sum()
        if total <= 0:
            idx = rng.integers(len(X))
        else:
            idx = rng.choice(len(X), p=d2 / total)
        centers.append(X[idx])
        d2 = np.minimum(d2, ((X - X[idx]) ** 2).sum(1))
    return np.array(centers)


def lloyd(X: np.ndarray, centers: np.ndarray, max_iter: int = 300) -> tuple[np.ndarray, np.ndarray, list[float]]:
    """Lloyd iterations to a fixpoint; empty clusters keep their previous center."""
    history = []
    labels = None
    for _ in range(max_iter):
        d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(2)
        new = d.argmin(1)
        history.append(float(d[np.arange(len(X)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for j in range(len(centers)):
            mask = labels == j
            if mask.any():
                centers[j] = X[mask].mean(0)
    return centers, labels, history


def kmeans(X: np.ndarray, k: int, seeds: Sequence[int] = range(10)) -> ClusterResult:
    """Best-of-restarts k-means with k-means++ seeding (ties go to the lower seed index)."""
    X = np.asarray(X, dtype=float)
    if len(X) < k:
        raise ValueError(f"need at least {k} vectors, got {len(X)}")
    best = None
    for s in seeds:
        rng = np.random.default_rng(s)
        centers, labels, hist = lloyd(X, _kmeanspp(X, k, rng))
        inertia = hist[-1]
        if best is None or inertia < best.inertia - 1e-12:
            best = ClusterResult(k, centers, labels, inertia, None, hist)
    n_labels = len(np.unique(best.labels))
    if 1 < n_labels < len(X):
        best.silhouette = float(silhouette_score(X, best.labels))
    return best


def kmeans_cluster(
    vectors: Sequence[ActivityVector] | np.ndarray,
    k_range: tuple[int, int] = (2, 8),
    seeds: Sequence[int] = range(10),
) -> ClusterResult:
    """Run k-means for every k in ``k_range`` (inclusive) and keep the best silhouette.

    When no k yields a defined silhouette, the smallest k is returned.
    """
    if len(vectors) and isinstance(vectors[0], ActivityVector):
        X = np.vstack([v.fractions for v in vectors])
    else:
        X = np.asarray(vectors, dtype=float)
    lo, hi = k_range
    if len(X) < lo:
        raise ValueError(f"need at least {lo} vectors, got {len(X)}")
    results = [kmeans(X, k, seeds) for k in range(lo, min(hi, len(X)) + 1)]
    scored = [r for r in results if r.silhouette is not None]
    if not scored:
        return results[0]
    return max(scored, key=lambda r: (r.silhouette, -r.k))


_TOKEN_SPLIT = re.compile(r"[^a-z0-9]+")


def name_token_frequency(names: Iterable[str]) -> Counter:
    """Lowercased alphanumeric tokens of length >= 2 in repository names.

    Only the part after ``owner/`` is tokenised when a full id is given.
    """
    counts: Counter = Counter()
    for name in names:
        base = name.rsplit("/", 1)[-1].lower()
        counts.update(t for t in _TOKEN_SPLIT.split(base) if len(t) >= 2)
    return counts
