import io
import threading

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fakestars.enrich import (
    DELETED, EXISTS, UNKNOWN, ExistenceProvider, FixtureProvider, GitHubProvider, PackageTable, TrendingTable,
    cross_reference, deletion_ratio,
)
from fakestars.events import MonthKey


def table1_fixture(n_det_deleted: int, n_base_deleted: int, prefix: str, n: int = 10000):
    detected = [f"{prefix}det{i}" for i in range(n)]
    baseline = [f"{prefix}base{i}" for i in range(n)]
    table = {e: (DELETED if i < n_det_deleted else EXISTS) for i, e in enumerate(detected)}
    table.update({e: (DELETED if i < n_base_deleted else EXISTS) for i, e in enumerate(baseline)})
    return detected, baseline, FixtureProvider(table)


def test_repository_deletion_ratio_fixture():
    det, base, provider = table1_fixture(9042, 503, "o/")
    r = deletion_ratio(det, provider, base, workers=4)
    assert (round(r.pct_deleted_detected, 2), round(r.pct_deleted_baseline, 2)) == (90.42, 5.03)


def test_account_deletion_ratio_fixture():
    det, base, provider = table1_fixture(5707, 354, "acct")
    r = deletion_ratio(det, provider, base)
    assert (round(r.pct_deleted_detected, 2), round(r.pct_deleted_baseline, 2)) == (57.07, 3.54)


def test_all_unknown():
    r = deletion_ratio(["a", "b"], FixtureProvider({}), ["c"])
    assert r.pct_deleted_detected is None and r.pct_deleted_baseline is None
    assert (r.detected.unknown, r.baseline.unknown) == (2, 1)


@settings(max_examples=60)
@given(st.dictionaries(st.text("abc", min_size=1, max_size=4), st.sampled_from([EXISTS, DELETED])),
       st.lists(st.text("abcd", min_size=1, max_size=4), max_size=30))
def test_percentages_recompute_and_symmetry(table, ids):
    r = deletion_ratio(ids, FixtureProvider(table), ids)
    assert r.pct_deleted_detected == r.pct_deleted_baseline
    c = r.detected
    assert c.deleted + (c.resolved - c.deleted) + c.unknown == len(ids)
    if c.resolved:
        assert c.pct == 100.0 * c.deleted / c.resolved


def test_fixture_csv_and_memoisation():
    p = FixtureProvider.from_csv(io.StringIO("entity_id,status\nOwner/Repo,deleted\nalice,exists\n"))
    assert p.status("owner/repo") == DELETED
    assert p.status("owner/repo") == DELETED
    assert p.status("bob") == UNKNOWN
    assert p.calls == 2


def test_fixture_rejects_bad_status():
    with pytest.raises(ValueError):
        FixtureProvider.from_csv(io.StringIO("entity_id,status\nx,maybe\n"))


class Flaky(ExistenceProvider):
    def _lookup(self, entity_id):
        raise ConnectionError("down")


def test_provider_failure_becomes_unknown():
    r = deletion_ratio(["a"], Flaky(), ["b"])
    assert r.detected.unknown == 1 and r.pct_deleted_detected is None


def test_memoisation_under_threads():
    class Counting(ExistenceProvider):
        def __init__(self):
            super().__init__()
            self.seen = []
            self.lock = threading.Lock()

        def _lookup(self, entity_id):
            with self.lock:
                self.seen.append(entity_id)
            return EXISTS

    p = Counting()
    ids = [f"e{i % 20}" for i in range(400)]
    r = deletion_ratio(ids, p, [], workers=8)
    assert r.detected.resolved == 400
    assert {p.status(f"e{i}") for i in range(20)} == {EXISTS}
    assert len(p._cache) == 20


class FakeResponse:
    def __init__(self, code, headers=None):
        self.status_code = code
        self.headers = headers or {}


class FakeSession:
    def __init__(self, script):
        self.script = dict(script)
        self.calls = []

    def get(self, url, headers=None, timeout=None):
        self.calls.append((url, headers))
        return self.script[url].pop(0)


def test_github_provider_maps_status_codes_and_backs_off():
    base = "https://api.example"
    session = FakeSession({
        f"{base}/repos/o/alive": [FakeResponse(200)],
        f"{base}/repos/o/gone": [FakeResponse(404)],
        f"{base}/users/limited": [FakeResponse(403), FakeResponse(429, {"Retry-After": "7"}), FakeResponse(451)],
        f"{base}/users/broken": [FakeResponse(500)],
    })
    sleeps = []
    gh = GitHubProvider(session=session, token="t0k", base_url=base, backoff=1.5, sleep=sleeps.append)
    assert gh.status("o/alive") == EXISTS
    assert gh.status("o/gone") == DELETED
    assert gh.status("limited") == DELETED
    assert gh.status("broken") == UNKNOWN
    assert sleeps == [1.5, 7.0]
    assert all(h["Authorization"] == "Bearer t0k" for _, h in session.calls)


def test_github_provider_gives_up_after_retries(monkeypatch):
    monkeypatch.setenv("GITHUB_TOKEN", "envtok")
    session = FakeSession({"https://api.github.com/users/x": [FakeResponse(429)] * 3})
    gh = GitHubProvider(session=session, max_retries=3, sleep=lambda s: None)
    assert gh.status("x") == UNKNOWN
    assert session.calls[0][1]["Authorization"] == "Bearer envtok"


# ---------------------------------------------------------------- cross reference

def test_trending_join():
    table = TrendingTable([("o/b", MonthKey(2024, 3)), ("zz/q", MonthKey(2024, 3))])
    res = cross_reference(["o/a", "o/b", "o/c"], table)
    assert res.matched == ["o/b"] and res.per_month == {MonthKey(2024, 3): 1}


def test_case_insensitive_match():
    table = TrendingTable.from_csv(io.StringIO("repo_id,month\nOwner/Name,2024-01\n"))
    assert cross_reference(["owner/name"], table).matched == ["owner/name"]


def test_trending_rate_fixture():
    campaigns = [f"c/r{i}" for i in range(18617)]
    table = TrendingTable((f"C/R{i}", MonthKey(2024, 1 + i % 12)) for i in range(0, 78 * 200, 200))
    res = cross_reference(campaigns, table)
    assert len(res.matched) == 78
    assert f"{100 * res.rate:.2f}" == "0.42"


def test_package_join_counts_registries():
    table = PackageTable.from_csv(io.StringIO(
        "package,registry,repo_id\nleft-pad,npm,o/a\nleftpad,pypi,O/A\nother,npm,o/b\nnone,npm,x/y\n"
    ))
    res = cross_reference(["o/a", "o/b", "o/c"], table)
    assert res.matched == ["o/a", "o/b"]
    assert res.per_registry == {"npm": 2, "pypi": 1} and res.n_packages == 3


@settings(max_examples=60)
@given(st.sets(st.sampled_from([f"o/r{i}" for i in range(10)])),
       st.lists(st.sampled_from([f"O/r{i}" for i in range(15)])))
def test_join_is_pure_subset_and_idempotent(campaigns, rows):
    table = TrendingTable((r, MonthKey(2024, 1)) for r in rows)
    once = cross_reference(campaigns, table)
    assert set(once.matched) <= campaigns
    assert cross_reference(once.matched, table).matched == once.matched
