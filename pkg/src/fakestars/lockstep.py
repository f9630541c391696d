"""Lockstep signature detection on the account -> repository star graph.

Groups are grown from seed repositories with an alternating greedy search in the
spirit of CopyCatch; every emitted group is re-checked against the exact lockstep
predicate before it leaves this module.
"""

from __future__ import annotations

import bisect
import csv
import itertools
import json
import math
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Callable, Iterable, NamedTuple

from .events import UTC, EventStore, StarEvent, Window, add_months, format_time, parse_time

SECONDS_PER_DAY = 86400
ORACLE_MAX_USERS = 15
ORACLE_MAX_REPOS = 10
MERGE_JACCARD = 0.5


class InstanceTooLarge(ValueError):
    pass


def to_epoch(ts: datetime) -> int:
    return int(ts.timestamp())


def from_epoch(t: int) -> datetime:
    return datetime.fromtimestamp(t, tz=UTC)


@dataclass(frozen=True)
class LockstepParams:
    n: int = 50
    m: int = 10
    delta_t: float = 30.0  # days
    rho: float = 0.5
    phi: float = 0.5
    max_iters: int = 20

    def __post_init__(self):
        if self.n < 1 or self.m < 1:
            raise ValueError("n and m must be >= 1")
        if self.delta_t <= 0:
            raise ValueError("delta_t must be positive")
        if not 0 < self.rho <= 1 or not 0 < self.phi <= 1:
            raise ValueError("rho and phi must lie in (0, 1]")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")

    @property
    def window_seconds(self) -> int:
        return int(round(self.delta_t * SECONDS_PER_DAY))

    @property
    def min_cover(self) -> int:
        """Smallest integer cover satisfying ``|U_r| >= rho * n``."""
        return max(1, math.ceil(self.rho * self.n - 1e-9))


class StarGraph:
    """Bipartite star graph with edge times in epoch seconds.

    ``repo_times[r]`` and ``repo_users[r]`` are aligned lists sorted by time
    (ties by account id), ``user_repos[u]`` maps each repo an account starred
    to the star time.
    """

    def __init__(self, edges: Iterable[tuple[str, str, int]] = ()):
        first: dict[tuple[str, str], int] = {}
        for u, r, t in edges:
            key = (u, r)
            if key not in first or t < first[key]:
                first[key] = t
        self.edge_time = first
        self.user_repos: dict[str, dict[str, int]] = {}
        per_repo: dict[str, list[tuple[int, str]]] = {}
        for (u, r), t in first.items():
            self.user_repos.setdefault(u, {})[r] = t
            per_repo.setdefault(r, []).append((t, u))
        self.repo_times: dict[str, list[int]] = {}
        self.repo_users: dict[str, list[str]] = {}
        for r, pairs in per_repo.items():
            pairs.sort()
            self.repo_times[r] = [t for t, _ in pairs]
            self.repo_users[r] = [u for _, u in pairs]

    @classmethod
    def from_stars(cls, stars: Iterable[StarEvent]) -> "StarGraph":
        return cls((s.actor_id, s.repo_id, to_epoch(s.timestamp)) for s in stars)

    @property
    def users(self) -> frozenset[str]:
        return frozenset(self.user_repos)

    @property
    def repos(self) -> frozenset[str]:
        return frozenset(self.repo_times)

    def __len__(self) -> int:
        return len(self.edge_time)

    def subgraph(self, start: int, end: int) -> "StarGraph":
        """Edges with ``start <= t < end``."""
        return StarGraph((u, r, t) for (u, r), t in self.edge_time.items() if start <= t < end)

    def users_in_window(self, repo: str, t0: int, t1: int) -> list[str]:
        """Accounts that starred ``repo`` at a time in the closed interval ``[t0, t1]``."""
        times = self.repo_times.get(repo, [])
        lo = bisect.bisect_left(times, t0)
        hi = bisect.bisect_right(times, t1)
        return self.repo_users[repo][lo:hi]


def build_star_graph(store: EventStore) -> StarGraph:
    return StarGraph.from_stars(store.stars)


def _best_window(graph: StarGraph, repo: str, candidates, width: int) -> tuple[int | None, frozenset[str]]:
    times = graph.repo_times.get(repo)
    if not times:
        return None, frozenset()
    users = graph.repo_users[repo]
    sel = [(t, u) for t, u in zip(times, users) if u in candidates]
    if not sel:
        return None, frozenset()
    best_i, best_n = 0, 0
    j = 0
    for i in range(len(sel)):
        if j < i:
            j = i
        while j + 1 < len(sel) and sel[j + 1][0] <= sel[i][0] + width:
            j += 1
        if j - i + 1 > best_n:
            best_i, best_n = i, j - i + 1
    t0 = sel[best_i][0]
    return t0, frozenset(u for t, u in sel[best_i:best_i + best_n])


def best_window(
    graph: StarGraph, repo: str, candidates: Iterable[str], delta_t: float
) -> tuple[datetime | None, frozenset[str]]:
    """Window ``[t, t + delta_t]`` (days) anchored at a candidate's star that covers
    the most candidates; ties go to the earliest start."""
    t, cover = _best_window(graph, repo, set(candidates), int(round(delta_t * SECONDS_PER_DAY)))
    return (None if t is None else from_epoch(t)), cover


@dataclass
class LockstepGroup:
    users: frozenset[str]
    repos: frozenset[str]
    window_starts: dict[str, int] = field(default_factory=dict)
    covers: dict[str, frozenset[str]] = field(default_factory=dict)

    def key(self) -> tuple:
        return (tuple(sorted(self.repos)), tuple(sorted(self.users)))

    def fake_stars(self, graph: StarGraph) -> set[tuple[str, str, int]]:
        return {(u, r, graph.edge_time[(u, r)]) for r in self.repos for u in self.covers[r]}

    def to_json(self) -> dict:
        return {
            "users": sorted(self.users),
            "repos": sorted(self.repos),
            "window_start": {r: format_time(from_epoch(self.window_starts[r])) for r in sorted(self.repos)},
            "covering_users": {r: sorted(self.covers[r]) for r in sorted(self.repos)},
        }

    @classmethod
    def from_json(cls, obj: dict) -> "LockstepGroup":
        return cls(
            users=frozenset(obj["users"]),
            repos=frozenset(obj["repos"]),
            window_starts={r: to_epoch(parse_time(t)) for r, t in obj["window_start"].items()},
            covers={r: frozenset(us) for r, us in obj["covering_users"].items()},
        )


class LockstepCheck(NamedTuple):
    ok: bool
    window_starts: dict[str, int] | None
    covers: dict[str, frozenset[str]] | None


def is_lockstep_group(graph: StarGraph, users, repos, params: LockstepParams) -> LockstepCheck:
    """Exact lockstep predicate with a per-repo witness window when it holds."""
    users = frozenset(users)
    repos = frozenset(repos)
    if len(users) < params.n or len(repos) < params.m:
        return LockstepCheck(False, None, None)
    width = params.window_seconds
    need = params.min_cover
    starts, covers = {}, {}
    for r in sorted(repos):
        t, cover = _best_window(graph, r, users, width)
        if len(cover) < need:
            return LockstepCheck(False, None, None)
        starts[r] = t
        covers[r] = cover
    return LockstepCheck(True, starts, covers)


def _confirm(graph: StarGraph, users, repos, params: LockstepParams) -> LockstepGroup | None:
    check = is_lockstep_group(graph, users, repos, params)
    if not check.ok:
        return None
    return LockstepGroup(frozenset(users), frozenset(repos), check.window_starts, check.covers)


def copycatch_from_seed(graph: StarGraph, seed: str, params: LockstepParams) -> LockstepGroup | None:
    """Grow a lockstep group from one seed repository.

    Alternates between (a) keeping the repos whose best window holds at least
    ``rho * n`` current users and (b) keeping the users that star at least a
    ``phi`` fraction of those repos inside their windows, until the pair stops
    changing or ``max_iters`` is reached.
    """
    width = params.window_seconds
    need = params.min_cover
    _, users = _best_window(graph, seed, graph.user_repos, width)
    if len(users) < need:
        return None
    repos: frozenset[str] = frozenset()
    for _ in range(params.max_iters):
        touched = sorted({r for u in users for r in graph.user_repos[u]})
        windows = {}
        for r in touched:
            t, cover = _best_window(graph, r, users, width)
            if len(cover) >= need:
                windows[r] = t
        new_repos = frozenset(windows)
        if not new_repos:
            return None
        quota = math.ceil(params.phi * len(new_repos) - 1e-9)
        hits: Counter[str] = Counter()
        for r, t in windows.items():
            hits.update(graph.users_in_window(r, t, t + width))
        new_users = frozenset(u for u, c in hits.items() if c >= quota)
        if new_users == users and new_repos == repos:
            break
        users, repos = new_users, new_repos
    # keep only the repos that still hold with the final user set
    repos = frozenset(
        r for r in repos if len(_best_window(graph, r, users, width)[1]) >= need
    )
    return _confirm(graph, users, repos, params)


def default_seeds(graph: StarGraph, params: LockstepParams) -> list[str]:
    """Repositories that gain at least ``ceil(rho * n)`` stars inside some window."""
    width = params.window_seconds
    need = params.min_cover
    seeds = []
    for r in sorted(graph.repo_times):
        times = graph.repo_times[r]
        if len(times) < need:
            continue
        if any(times[i + need - 1] - times[i] <= width for i in range(len(times) - need + 1)):
            seeds.append(r)
    return seeds


def _jaccard(a: frozenset, b: frozenset) -> float:
    if not a and not b:
        return 1.0
    return len(a & b) / len(a | b)


def merge_groups(
    graph: StarGraph, groups: Iterable[LockstepGroup], params: LockstepParams, threshold: float = MERGE_JACCARD
) -> list[LockstepGroup]:
    """Union groups whose user sets overlap with Jaccard >= ``threshold``.

    The lockstep predicate is monotone in the user set, so a union of valid
    groups is valid; witnesses are recomputed on ``graph``.
    """
    merged: list[tuple[frozenset, frozenset]] = []
    for g in sorted(groups, key=LockstepGroup.key):
        merged.append((g.users, g.repos))
        changed = True
        while changed:
            changed = False
            users, repos = merged[-1]
            for i in range(len(merged) - 1):
                if _jaccard(merged[i][0], users) >= threshold:
                    u2, r2 = merged.pop(i)
                    merged[-1] = (users | u2, repos | r2)
                    changed = True
                    break
    out = []
    for users, repos in merged:
        g = _confirm(graph, users, repos, params)
        if g is None:  # pragma: no cover - guarded by monotonicity
            raise AssertionError("merged group lost the lockstep property")
        out.append(g)
    out.sort(key=LockstepGroup.key)
    return out


@dataclass
class LockstepResult:
    groups: list[LockstepGroup]
    stars: set[tuple[str, str, int]]

    @property
    def users(self) -> frozenset[str]:
        return frozenset(u for g in self.groups for u in g.users)

    @property
    def repos(self) -> frozenset[str]:
        return frozenset(r for g in self.groups for r in g.repos)


def run_lockstep_detection(
    graph: StarGraph,
    params: LockstepParams = LockstepParams(),
    seed_selector: Callable[[StarGraph, LockstepParams], list[str]] | None = None,
    threads: int = 1,
) -> LockstepResult:
    seeds = (seed_selector or default_seeds)(graph, params)

    def grow(seed):
        return copycatch_from_seed(graph, seed, params)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            found = list(pool.map(grow, seeds))
    else:
        found = [grow(s) for s in seeds]
    groups = merge_groups(graph, [g for g in found if g is not None], params)
    stars: set[tuple[str, str, int]] = set()
    for g in groups:
        stars |= g.fake_stars(graph)
    return LockstepResult(groups, stars)


def brute_force_lockstep(graph: StarGraph, params: LockstepParams) -> list[LockstepGroup]:
    """All inclusion-maximal lockstep groups by exhaustive enumeration (tiny graphs only)."""
    users = sorted(graph.users)
    repos = sorted(graph.repos)
    if len(users) > ORACLE_MAX_USERS or len(repos) > ORACLE_MAX_REPOS:
        raise InstanceTooLarge(f"{len(users)} users x {len(repos)} repos exceeds the oracle cap")
    width = params.window_seconds
    need = params.rho * params.n

    def max_cover(subset: frozenset, r: str) -> tuple[int, int | None, frozenset]:
        pts = [(graph.edge_time[(u, r)], u) for u in subset if (u, r) in graph.edge_time]
        best = (0, None, frozenset())
        for t0, _ in pts:
            cov = frozenset(u for t, u in pts if t0 <= t <= t0 + width)
            if len(cov) > best[0] or (len(cov) == best[0] and best[1] is not None and t0 < best[1]):
                best = (len(cov), t0, cov)
        return best

    found = []
    for size in range(max(params.n, 1), len(users) + 1):
        for combo in itertools.combinations(users, size):
            subset = frozenset(combo)
            ok = {}
            for r in repos:
                c, t0, cov = max_cover(subset, r)
                if c >= need - 1e-9:
                    ok[r] = (t0, cov)
            if len(ok) >= params.m:
                found.append(LockstepGroup(
                    subset, frozenset(ok),
                    {r: v[0] for r, v in ok.items()}, {r: v[1] for r, v in ok.items()},
                ))
    # largest first: anything dominated is dominated by an already-kept maximal group
    found.sort(key=lambda g: (-len(g.users), -len(g.repos)))
    maximal: list[LockstepGroup] = []
    for g in found:
        if not any(g.users <= h.users and g.repos <= h.repos for h in maximal):
            maximal.append(g)
    maximal.sort(key=LockstepGroup.key)
    return maximal


def plan_chunks(window: Window, months: int = 6, step: int = 3) -> list[Window]:
    """Overlapping ``months``-long chunks starting every ``step`` months.

    Windows shorter than one chunk yield a single chunk equal to the window.
    """
    chunks = []
    start = window.start
    while True:
        end = add_months(start, months)
        if end >= window.end:
            chunks.append(Window(start, window.end))
            break
        chunks.append(Window(start, end))
        start = add_months(start, step)
    return chunks


def merge_chunk_results(
    graph: StarGraph, results: Iterable[LockstepResult], params: LockstepParams
) -> LockstepResult:
    results = list(results)
    groups = merge_groups(graph, [g for res in results for g in res.groups], params)
    stars: set[tuple[str, str, int]] = set()
    for res in results:
        stars |= res.stars
    return LockstepResult(groups, stars)


def detect_chunked(
    graph: StarGraph,
    window: Window,
    params: LockstepParams = LockstepParams(),
    threads: int = 1,
    chunks: list[Window] | None = None,
) -> LockstepResult:
    """Run detection independently on each chunk's subgraph and merge."""
    chunks = plan_chunks(window) if chunks is None else chunks
    per_chunk = []
    for c in chunks:
        sub = graph.subgraph(to_epoch(c.start), to_epoch(c.end))
        per_chunk.append(run_lockstep_detection(sub, params, threads=threads))
    return merge_chunk_results(graph, per_chunk, params)


def write_groups_jsonl(groups: Iterable[LockstepGroup], fh: IO[str]) -> None:
    for g in groups:
        fh.write(json.dumps(g.to_json(), sort_keys=True) + "\n")


def read_groups_jsonl(fh: IO[str]) -> list[LockstepGroup]:
    return [LockstepGroup.from_json(json.loads(line)) for line in fh if line.strip()]


def write_stars_csv(stars: Iterable[tuple[str, str, int]], fh: IO[str], signature: str = "lockstep") -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["actor_id", "repo_id", "timestamp", "signature"])
    for u, r, t in sorted(stars):
        w.writerow([u, r, format_time(from_epoch(t)), signature])
