"""Merge signature detections into a fake-star ledger and find campaign repositories."""

from __future__ import annotations

import csv
import json
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from datetime import datetime
from typing import IO, Iterable

from .events import EventStore, MonthKey, format_time, monthly_star_counts, parse_time
from .lockstep import from_epoch
from .lowactivity import LowActivityFlag

LOW_ACTIVITY = "low_activity"
LOCKSTEP = "lockstep"


@dataclass(frozen=True, order=True)
class LedgerEntry:
    actor_id: str
    repo_id: str
    timestamp: datetime
    signatures: frozenset[str] = field(compare=False)


class FakeStarLedger:
    """Suspected fake stars keyed by (actor, repo), each tagged with the signatures that flagged it."""

    def __init__(self, entries: Iterable[LedgerEntry] = ()):
        self._entries: dict[tuple[str, str], LedgerEntry] = {}
        for e in entries:
            self.add(e.actor_id, e.repo_id, e.timestamp, e.signatures)

    def add(self, actor_id: str, repo_id: str, timestamp: datetime, signatures: Iterable[str]) -> None:
        key = (actor_id, repo_id)
        sigs = frozenset(signatures)
        prev = self._entries.get(key)
        if prev is not None:
            sigs |= prev.signatures
            timestamp = min(timestamp, prev.timestamp)
        self._entries[key] = LedgerEntry(actor_id, repo_id, timestamp, sigs)

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self):
        return iter(sorted(self._entries.values()))

    def __contains__(self, key) -> bool:
        return key in self._entries

    def get(self, actor_id: str, repo_id: str) -> LedgerEntry | None:
        return self._entries.get((actor_id, repo_id))

    def by_repo(self) -> dict[str, list[LedgerEntry]]:
        out: dict[str, list[LedgerEntry]] = defaultdict(list)
        for e in self:
            out[e.repo_id].append(e)
        return dict(out)

    def count_by_signature(self) -> Counter:
        c: Counter = Counter()
        for e in self._entries.values():
            c.update(e.signatures)
        return c

    def write_csv(self, fh: IO[str]) -> None:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["actor_id", "repo_id", "timestamp", "signature"])
        for e in self:
            w.writerow([e.actor_id, e.repo_id, format_time(e.timestamp), ";".join(sorted(e.signatures))])

    @classmethod
    def read_csv(cls, fh: IO[str]) -> "FakeStarLedger":
        ledger = cls()
        for row in csv.DictReader(fh):
            ledger.add(row["actor_id"], row["repo_id"], parse_time(row["timestamp"]), row["signature"].split(";"))
        return ledger


def merge_detections(
    low: Iterable[LowActivityFlag], lock: Iterable[tuple[str, str, int]]
) -> FakeStarLedger:
    ledger = FakeStarLedger()
    for f in low:
        ledger.add(f.actor_id, f.starred_repo, f.star_time, [LOW_ACTIVITY])
    for u, r, t in lock:
        ledger.add(u, r, from_epoch(t), [LOCKSTEP])
    return ledger


@dataclass
class CampaignReport:
    repo_id: str
    spike_months: list[MonthKey]
    monthly: dict[MonthKey, tuple[int, int]]  # month -> (fake, total)
    all_time_fake_pct: float  # fraction in [0, 1]
    campaign_accounts: frozenset[str]
    fake_total: int
    star_total: int

    def to_json(self) -> dict:
        return {
            "repo_id": self.repo_id,
            "spike_months": [str(m) for m in self.spike_months],
            "monthly": {str(m): {"fake": f, "total": t} for m, (f, t) in sorted(self.monthly.items())},
            "all_time_fake_pct": self.all_time_fake_pct,
            "fake_total": self.fake_total,
            "star_total": self.star_total,
            "campaign_accounts": sorted(self.campaign_accounts),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "CampaignReport":
        return cls(
            repo_id=obj["repo_id"],
            spike_months=[MonthKey.parse(m) for m in obj["spike_months"]],
            monthly={MonthKey.parse(m): (v["fake"], v["total"]) for m, v in obj["monthly"].items()},
            all_time_fake_pct=obj["all_time_fake_pct"],
            campaign_accounts=frozenset(obj["campaign_accounts"]),
            fake_total=obj["fake_total"],
            star_total=obj["star_total"],
        )


@dataclass(frozen=True)
class CampaignThresholds:
    spike_min_fake: int = 50  # strictly more than this many fake stars in a month
    spike_min_share: float = 0.5  # fake share of that month's stars strictly above this
    all_time_min_share: float = 0.10  # all-time fake share strictly above this
    include_all_spike_stargazers: bool = False


def detect_campaigns(
    ledger: FakeStarLedger, store: EventStore, thresholds: CampaignThresholds = CampaignThresholds()
) -> list[CampaignReport]:
    """Repositories with at least one spike month and a large enough all-time fake share.

    Campaign accounts are the flagged stargazers whose flagged star falls in a
    spike month, or every stargazer of a spike month when
    ``include_all_spike_stargazers`` is set.
    """
    reports = []
    for repo, entries in sorted(ledger.by_repo().items()):
        totals = monthly_star_counts(store, repo)
        star_total = sum(totals.values())
        if star_total == 0:
            raise ValueError(f"ledger references {repo!r} which has no stars in the store")
        fake = Counter(MonthKey.of(e.timestamp) for e in entries)
        monthly = {m: (fake[m], totals.get(m, 0)) for m in sorted(fake)}
        spikes = [
            m for m, (f, t) in monthly.items()
            if f > thresholds.spike_min_fake and t > 0 and f / t > thresholds.spike_min_share
        ]
        share = len(entries) / star_total
        if not spikes or not share > thresholds.all_time_min_share:
            continue
        spike_set = set(spikes)
        if thresholds.include_all_spike_stargazers:
            accounts = {s.actor_id for s in store.stars_by_repo[repo] if MonthKey.of(s.timestamp) in spike_set}
        else:
            accounts = {e.actor_id for e in entries if MonthKey.of(e.timestamp) in spike_set}
        reports.append(CampaignReport(
            repo_id=repo,
            spike_months=spikes,
            monthly=monthly,
            all_time_fake_pct=share,
            campaign_accounts=frozenset(accounts),
            fake_total=len(entries),
            star_total=star_total,
        ))
    return reports


def campaign_stars(ledger: FakeStarLedger, reports: Iterable[CampaignReport]) -> list[LedgerEntry]:
    """Ledger entries from campaign accounts on their campaign repos in spike months."""
    out = []
    for rep in reports:
        spikes = set(rep.spike_months)
        for acc in rep.campaign_accounts:
            e = ledger.get(acc, rep.repo_id)
            if e is not None and MonthKey.of(e.timestamp) in spikes:
                out.append(e)
    return sorted(out)


def write_reports_jsonl(reports: Iterable[CampaignReport], fh: IO[str]) -> None:
    for rep in reports:
        fh.write(json.dumps(rep.to_json(), sort_keys=True) + "\n")


def read_reports_jsonl(fh: IO[str]) -> list[CampaignReport]:
    return [CampaignReport.from_json(json.loads(line)) for line in fh if line.strip()]


def write_summary_csv(reports: Iterable[CampaignReport], fh: IO[str]) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["repo", "first_spike_month", "n_spike_months", "fake_total", "all_time_fake_pct"])
    for rep in reports:
        w.writerow([
            rep.repo_id, str(rep.spike_months[0]), len(rep.spike_months),
            rep.fake_total, f"{100 * rep.all_time_fake_pct:.4f}",
        ])
