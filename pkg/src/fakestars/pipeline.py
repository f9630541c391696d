"""Subcommand implementations: each reads artifacts from and writes artifacts to one directory."""

from __future__ import annotations

import csv
import json
import logging
from collections import Counter
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import campaigns as camp
from . import econo, enrich, lockstep, lowactivity, measure, synth
from .config import PipelineConfig
from .events import (
    EVENT_CLASSES, EventStore, activity_duration, classify_event, dump_event_stream,
    parse_event_stream, parse_event_streams,
)

log = logging.getLogger(__name__)

EVENTS = "events.jsonl"
INGEST = "ingest.json"
TRUTH = "ground_truth.csv"
LOW = "low_activity.csv"
GROUPS = "lockstep_groups.jsonl"
LOCK_STARS = "lockstep_stars.csv"
LEDGER = "fake_stars.csv"
CHUNKS = "chunks.csv"
CAMPAIGNS = "campaigns.jsonl"
CAMPAIGN_SUMMARY = "campaigns_summary.csv"
EVALUATION = "evaluation.json"
PANEL = "panel.csv"
ENRICH = "enrich.json"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"


class PipelineError(RuntimeError):
    """A subcommand cannot run: missing inputs or unusable configuration."""


def _require(out: Path, *names: str) -> None:
    missing = [n for n in names if not (out / n).is_file()]
    if missing:
        raise PipelineError(f"missing upstream artifacts in {out}: {', '.join(missing)}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _load_store(cfg: PipelineConfig, out: Path) -> EventStore:
    _require(out, EVENTS)
    return parse_event_stream(out / EVENTS, window=cfg.observation_window())


def _load_ledger(out: Path) -> camp.FakeStarLedger:
    _require(out, LEDGER)
    with open(out / LEDGER) as fh:
        return camp.FakeStarLedger.read_csv(fh)


def _load_campaigns(out: Path) -> list[camp.CampaignReport]:
    _require(out, CAMPAIGNS)
    with open(out / CAMPAIGNS) as fh:
        return camp.read_reports_jsonl(fh)


def _fmt(x: float | None, digits: int = 4) -> str:
    return "" if x is None else f"{x:.{digits}f}"


# ---------------------------------------------------------------- ingest / synth

def run_ingest(cfg: PipelineConfig, out: Path) -> dict:
    if not cfg.input_paths:
        raise PipelineError("config has no input_paths to ingest")
    missing = [p for p in cfg.input_paths if not Path(p).is_file()]
    if missing:
        raise PipelineError(f"input files not found: {', '.join(missing)}")
    store = parse_event_streams(cfg.input_paths, window=cfg.observation_window())
    out.mkdir(parents=True, exist_ok=True)
    with open(out / EVENTS, "w") as fh:
        dump_event_stream(store, fh)
    summary = {
        "events": len(store),
        "stars": len(store.stars),
        "actors": len(store.by_actor),
        "repos": len(store.by_repo),
        "malformed_lines": store.malformed_count,
    }
    _write_json(out / INGEST, summary)
    return summary


def run_synth(cfg: PipelineConfig, out: Path) -> dict:
    if cfg.scenario is None:
        raise PipelineError("config has no scenario section")
    store, truth = synth.generate(cfg.scenario)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / EVENTS, "w") as fh:
        dump_event_stream(store, fh)
    with open(out / TRUTH, "w") as fh:
        truth.write_csv(fh)
    summary = {
        "events": len(store),
        "stars": len(store.stars),
        "injected_stars": len(truth.stars),
        "injected_accounts": len(truth.accounts),
        "injected_repos": len(truth.repos),
    }
    _write_json(out / INGEST, summary)
    return summary


# ---------------------------------------------------------------- detection

def run_detect(cfg: PipelineConfig, out: Path) -> dict:
    store = _load_store(cfg, out)
    flags = lowactivity.filter_by_repo_threshold(
        lowactivity.detect_low_activity(store), cfg.low_activity_min_fake
    )
    graph = lockstep.build_star_graph(store)
    window = store.span()
    if window is None:
        result = lockstep.LockstepResult([], set())
        chunks = []
    elif cfg.chunked:
        chunks = lockstep.plan_chunks(window)
        result = lockstep.detect_chunked(graph, window, cfg.lockstep, threads=cfg.threads, chunks=chunks)
    else:
        chunks = [window]
        result = lockstep.run_lockstep_detection(graph, cfg.lockstep, threads=cfg.threads)
    ledger = camp.merge_detections(flags, result.stars)

    with open(out / LOW, "w") as fh:
        lowactivity.write_flags_csv(flags, fh)
    with open(out / GROUPS, "w") as fh:
        lockstep.write_groups_jsonl(result.groups, fh)
    with open(out / LOCK_STARS, "w") as fh:
        lockstep.write_stars_csv(result.stars, fh)
    with open(out / LEDGER, "w") as fh:
        ledger.write_csv(fh)
    with open(out / CHUNKS, "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["start", "end"])
        for c in chunks:
            w.writerow([c.start.isoformat(), c.end.isoformat()])
    return {
        "low_activity_stars": len(flags),
        "lockstep_groups": len(result.groups),
        "lockstep_stars": len(result.stars),
        "fake_stars": len(ledger),
    }


def run_campaigns(cfg: PipelineConfig, out: Path) -> dict:
    _require(out, EVENTS, LEDGER)
    store = _load_store(cfg, out)
    ledger = _load_ledger(out)
    reports = camp.detect_campaigns(ledger, store, cfg.campaigns)
    with open(out / CAMPAIGNS, "w") as fh:
        camp.write_reports_jsonl(reports, fh)
    with open(out / CAMPAIGN_SUMMARY, "w") as fh:
        camp.write_summary_csv(reports, fh)
    return {
        "campaign_repos": len(reports),
        "campaign_accounts": len(set().union(*(r.campaign_accounts for r in reports))) if reports else 0,
    }


def run_evaluate(cfg: PipelineConfig, out: Path) -> dict:
    _require(out, EVENTS, TRUTH, LEDGER, CAMPAIGNS)
    store = _load_store(cfg, out)
    with open(out / TRUTH) as fh:
        truth = synth.GroundTruth.read_csv(fh)
    ledger = _load_ledger(out)
    reports = _load_campaigns(out)
    repos = [r.repo_id for r in reports]
    accounts = set().union(*(r.campaign_accounts for r in reports)) if reports else set()
    stars = {(e.actor_id, e.repo_id) for e in camp.campaign_stars(ledger, reports)}
    scores = synth.evaluate_detection(truth, repos, accounts, stars)
    result = {
        name: {
            "precision": s.precision, "recall": s.recall, "true_positives": s.true_positives,
            "detected": s.n_detected, "truth": s.n_truth,
        }
        for name, s in scores.items()
    }
    result["background_false_flag_rate"] = synth.false_flag_rate(store, truth, repos)
    _write_json(out / EVALUATION, result)
    return result


# ---------------------------------------------------------------- measurement

def _durations(store: EventStore, subjects) -> list[int]:
    return [activity_duration(store, s) for s in sorted(subjects) if s in store.by_repo or s in store.by_actor]


def _ccdf_rows(values: list[int]) -> list[tuple[float, float]]:
    if not values:
        return []
    xs, ys = measure.ccdf(values)
    return list(zip(xs.tolist(), ys.tolist()))


def write_plot_data(store: EventStore, ledger, reports, out: Path) -> None:
    """Plot-data tables: duration CCDFs per group and event-type mixes."""
    camp_repos = {r.repo_id for r in reports}
    lock_accounts = {e.actor_id for e in ledger if camp.LOCKSTEP in e.signatures}
    camp_accounts = set().union(*(r.campaign_accounts for r in reports)) if reports else set()
    lock_camp = camp_accounts & lock_accounts
    sample_repos = set(store.stars_by_repo) - camp_repos
    stargazers = {s.actor_id for s in store.stars}
    flagged = {e.actor_id for e in ledger}
    sample_accounts = stargazers - flagged

    groups = {
        "campaign_repos": _durations(store, camp_repos),
        "sample_repos": _durations(store, sample_repos),
        "lockstep_campaign_accounts": _durations(store, lock_camp),
        "sample_accounts": _durations(store, sample_accounts),
    }
    with open(out / "plot_duration_ccdf.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group", "days", "ccdf"])
        for name, vals in groups.items():
            for x, y in _ccdf_rows(vals):
                w.writerow([name, int(x), f"{y:.6f}"])

    def mix(subjects, by_repo: bool) -> Counter:
        c: Counter = Counter()
        for s in subjects:
            evs = store.repo_events(s) if by_repo else store.actor_events(s)
            c.update(classify_event(e.event_kind) for e in evs)
        return c

    with open(out / "plot_event_types.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group"] + [c for c in EVENT_CLASSES])
        for name, subjects, by_repo in (
            ("campaign_repos", camp_repos, True),
            ("sample_repos", sample_repos, True),
            ("campaign_accounts", camp_accounts, False),
            ("sample_accounts", sample_accounts, False),
        ):
            c = mix(sorted(subjects), by_repo)
            total = sum(c.values())
            w.writerow([name] + [_fmt(100 * c[k] / total if total else None) for k in EVENT_CLASSES])


def run_measure(cfg: PipelineConfig, out: Path, plot_data: bool = False) -> dict:
    _require(out, EVENTS, LEDGER, CAMPAIGNS)
    store = _load_store(cfg, out)
    ledger = _load_ledger(out)
    reports = _load_campaigns(out)

    rows = measure.prevalence_series(store, ledger, reports, cfg.observation_window(), cfg.measure.popular_threshold)
    with open(out / "prevalence.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([
            "month", "fake_stars", "all_stars", "pct_fake_stars",
            "campaign_accounts_active", "active_accounts", "pct_campaign_accounts_of_active",
            "campaign_repos_popular", "popular_repos", "pct_campaign_repos_of_popular",
        ])
        for r in rows:
            w.writerow([
                str(r.month), r.fake_stars, r.all_stars, _fmt(r.pct_fake_stars),
                r.campaign_accounts_active, r.active_accounts, _fmt(r.pct_campaign_accounts_of_active),
                r.campaign_repos_popular, r.popular_repos, _fmt(r.pct_campaign_repos_of_popular),
            ])

    accounts = sorted(set().union(*(r.campaign_accounts for r in reports))) if reports else []
    vectors = measure.activity_vectors(store, accounts, collapse=cfg.measure.collapse)
    classes = measure.COLLAPSED_CLASSES if cfg.measure.collapse else EVENT_CLASSES
    cluster_info: dict = {"k": None, "silhouette": None}
    with open(out / "clusters.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cluster", "share_pct"] + [f"pct_{c}" for c in classes])
        if len(vectors) >= cfg.measure.k_min:
            res = measure.kmeans_cluster(vectors, (cfg.measure.k_min, cfg.measure.k_max), cfg.measure.seeds)
            cluster_info = {"k": res.k, "silhouette": res.silhouette}
            sizes = np.bincount(res.labels, minlength=res.k)
            order = np.argsort(-sizes, kind="stable")
            for rank, j in enumerate(j for j in order if sizes[j] > 0):
                w.writerow([rank, _fmt(100 * sizes[j] / len(vectors), 2)]
                           + [_fmt(100 * v, 2) for v in res.centers[j]])

    tokens = measure.name_token_frequency(r.repo_id for r in reports)
    with open(out / "name_tokens.csv", "w") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["token", "count"])
        for tok, n in sorted(tokens.items(), key=lambda kv: (-kv[1], kv[0])):
            w.writerow([tok, n])

    if plot_data:
        write_plot_data(store, ledger, reports, out)
    return {"months": len(rows), "clustered_accounts": len(vectors), **cluster_info}


# ---------------------------------------------------------------- regression

def run_regress(cfg: PipelineConfig, out: Path) -> dict:
    _require(out, EVENTS, LEDGER, CAMPAIGNS)
    store = _load_store(cfg, out)
    ledger = _load_ledger(out)
    reports = _load_campaigns(out)
    panel = econo.build_panel(store, ledger, reports, cfg.observation_window())
    with open(out / PANEL, "w") as fh:
        econo.write_panel_csv(panel, fh)
    fitted = {}
    for k in cfg.regression.orders:
        spec = econo.RegressionSpec(k=k, controls=cfg.regression.controls)
        path = out / f"regression_ar{k}.txt"
        try:
            fit = econo.fit_fixed_effects_ar(panel, spec)
        except (ValueError, np.linalg.LinAlgError) as exc:
            path.write_text(f"Fixed-effects panel AR({k})\nnot estimable: {exc}\n")
            fitted[k] = None
            continue
        path.write_text(fit.format_table())
        fitted[k] = fit.n_obs
    return {"panel_rows": len(panel), "fits": fitted}


# ---------------------------------------------------------------- enrichment

def _read_ids(path: str) -> list[str]:
    with open(path) as fh:
        return [line.strip() for line in fh if line.strip() and not line.startswith("#")]


def run_enrich(cfg: PipelineConfig, out: Path) -> dict:
    _require(out, CAMPAIGNS)
    ec = cfg.enrich
    for name in ("existence_fixture", "baseline_repos", "baseline_accounts", "trending", "packages"):
        path = getattr(ec, name)
        if path and not Path(path).is_file():
            raise PipelineError(f"enrich.{name} not found: {path}")
    if not ec.live and not ec.existence_fixture and not ec.trending and not ec.packages:
        raise PipelineError("enrich needs an existence_fixture, live lookups, or a cross-reference table")
    reports = _load_campaigns(out)
    repos = [r.repo_id for r in reports]
    accounts = sorted(set().union(*(r.campaign_accounts for r in reports))) if reports else []
    result: dict = {}

    provider = None
    if ec.live:
        provider = enrich.GitHubProvider()
    elif ec.existence_fixture:
        with open(ec.existence_fixture) as fh:
            provider = enrich.FixtureProvider.from_csv(fh)
    if provider is not None:
        for label, detected, baseline_path in (
            ("repositories", repos, ec.baseline_repos),
            ("accounts", accounts, ec.baseline_accounts),
        ):
            baseline = _read_ids(baseline_path) if baseline_path else []
            dr = enrich.deletion_ratio(detected, provider, baseline, workers=ec.workers)
            result[f"deletion_{label}"] = {
                "pct_deleted_detected": dr.pct_deleted_detected,
                "pct_deleted_baseline": dr.pct_deleted_baseline,
                "detected": asdict(dr.detected),
                "baseline": asdict(dr.baseline),
            }
    if ec.trending:
        with open(ec.trending) as fh:
            cr = enrich.cross_reference(repos, enrich.TrendingTable.from_csv(fh))
        result["trending"] = {
            "matched": cr.matched, "rate": cr.rate,
            "per_month": {str(m): n for m, n in cr.per_month.items()},
        }
    if ec.packages:
        with open(ec.packages) as fh:
            cr = enrich.cross_reference(repos, enrich.PackageTable.from_csv(fh))
        result["packages"] = {
            "matched": cr.matched, "rate": cr.rate, "n_packages": cr.n_packages, "per_registry": cr.per_registry,
        }
    _write_json(out / ENRICH, result)
    return result


# ---------------------------------------------------------------- report

def run_report(cfg: PipelineConfig, out: Path, plot_data: bool = False) -> dict:
    _require(out, EVENTS, LEDGER, CAMPAIGNS)
    store = _load_store(cfg, out)
    ledger = _load_ledger(out)
    reports = _load_campaigns(out)
    sig = ledger.count_by_signature()
    camp_entries = camp.campaign_stars(ledger, reports)
    summary = {
        "events": len(store),
        "stars": len(store.stars),
        "fake_stars": len(ledger),
        "fake_stars_low_activity": sig.get(camp.LOW_ACTIVITY, 0),
        "fake_stars_lockstep": sig.get(camp.LOCKSTEP, 0),
        "repos_with_fake_stars": len({e.repo_id for e in ledger}),
        "campaign_repos": len(reports),
        "campaign_accounts": len({e.actor_id for e in camp_entries}),
        "campaign_fake_stars": len(camp_entries),
    }
    if (out / EVALUATION).is_file():
        summary["evaluation"] = json.loads((out / EVALUATION).read_text())
    _write_json(out / REPORT_JSON, summary)
    lines = [
        f"{summary['fake_stars']} suspected fake stars across {summary['repos_with_fake_stars']} repositories "
        f"before postprocessing",
        f"  low activity signature: {summary['fake_stars_low_activity']}",
        f"  lockstep signature:     {summary['fake_stars_lockstep']}",
        f"{summary['campaign_repos']} repositories with fake star campaigns, "
        f"{summary['campaign_accounts']} participating accounts "
        f"({summary['campaign_fake_stars']} fake stars)",
    ]
    (out / REPORT_TXT).write_text("\n".join(lines) + "\n")
    if plot_data:
        write_plot_data(store, ledger, reports, out)
    return summary


COMMANDS = {
    "ingest": run_ingest,
    "synth": run_synth,
    "detect": run_detect,
    "campaigns": run_campaigns,
    "evaluate": run_evaluate,
    "measure": run_measure,
    "regress": run_regress,
    "enrich": run_enrich,
    "report": run_report,
}
