import io

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fakestars.campaigns import detect_campaigns, merge_detections
from fakestars.events import dump_event_stream
from fakestars.lockstep import build_star_graph, detect_chunked
from fakestars.lowactivity import detect_low_activity, filter_by_repo_threshold
from fakestars.synth import (
    GroundTruth, Injection, ScenarioConfig, ScenarioError, evaluate_detection, false_flag_rate, generate,
    score_sets,
)

SMALL = dict(n_accounts=3000, n_repos=1000, star_rate=30.0,
             start="2024-01-01T00:00:00Z", end="2024-04-01T00:00:00Z")


def _dump(store) -> str:
    buf = io.StringIO()
    dump_event_stream(store, buf)
    return buf.getvalue()


def test_no_injections_no_truth():
    _, truth = generate(ScenarioConfig(**SMALL))
    assert truth.accounts == truth.repos == truth.stars == set()


def test_one_injection_plants_sixty_by_twelve():
    inj = Injection(60, 12, 5, 60)
    store, truth = generate(ScenarioConfig(injections=(inj,), **SMALL))
    assert len(truth.stars) == 720
    assert len(truth.accounts) == 60 and len(truth.repos) == 12
    stars = {(s.actor_id, s.repo_id, s.timestamp) for s in store.stars}
    assert truth.stars <= stars


def test_bursts_respect_span_and_spread():
    inj = Injection(60, 12, 3, 40, spread_days=10, start="2024-02-01T00:00:00Z")
    _, truth = generate(ScenarioConfig(injections=(inj,), **SMALL))
    times = sorted(t for _, _, t in truth.stars)
    assert (times[-1] - times[0]).total_seconds() < (3 + 10) * 86400
    for repo in truth.repos:
        ts = [t for _, r, t in truth.stars if r == repo]
        assert (max(ts) - min(ts)).total_seconds() < 3 * 86400


def test_same_seed_same_bytes_different_seed_differs():
    cfg = ScenarioConfig(injections=(Injection(60, 12, 5, 60),), **SMALL)
    assert _dump(generate(cfg)[0]) == _dump(generate(cfg)[0])
    other = ScenarioConfig(injections=(Injection(60, 12, 5, 60),), rng_seed=1, **SMALL)
    assert _dump(generate(other)[0]) != _dump(generate(cfg)[0])


def test_camouflage_adds_popular_stars():
    inj = Injection(20, 2, 5, 20, camouflage_stars=3)
    store, truth = generate(ScenarioConfig(injections=(inj,), **SMALL))
    fake_stars = [s for s in store.stars if s.actor_id in truth.accounts]
    assert len(fake_stars) == 2 * 20 + 20 * 3
    # camouflage is not ground truth
    assert len(truth.stars) == 40


def test_background_accounts_are_never_low_activity():
    store, _ = generate(ScenarioConfig(**SMALL))
    assert detect_low_activity(store) == set()


@pytest.mark.parametrize("bad", [
    Injection(10, 2, 5, 11),
    Injection(-1, 2, 5, 1),
    Injection(10, 2, 0, 5),
])
def test_infeasible_injection_rejected(bad):
    with pytest.raises(ScenarioError):
        generate(ScenarioConfig(injections=(bad,), **SMALL))


def test_unknown_scenario_key_rejected():
    with pytest.raises(ScenarioError):
        ScenarioConfig.from_dict({"n_accounts": 10, "colour": "blue"})


def test_scenario_dict_round_trip():
    cfg = ScenarioConfig(injections=(Injection(60, 12, 5, 60, start="2024-02-01T00:00:00Z"),), **SMALL)
    assert ScenarioConfig.from_dict(cfg.to_dict()) == cfg


def test_ground_truth_csv_round_trip():
    _, truth = generate(ScenarioConfig(injections=(Injection(20, 3, 5, 10),), **SMALL))
    buf = io.StringIO()
    truth.write_csv(buf)
    buf.seek(0)
    back = GroundTruth.read_csv(buf)
    assert (back.accounts, back.repos, back.stars) == (truth.accounts, truth.repos, truth.stars)


# ---------------------------------------------------------------- scoring

def test_perfect_detection():
    truth = GroundTruth({"a", "b"}, {"o/x"}, set())
    scores = evaluate_detection(truth, ["o/x"], ["a", "b"])
    assert scores["repos"].precision == scores["repos"].recall == 1.0
    assert scores["accounts"].precision == scores["accounts"].recall == 1.0


def test_recall_of_688_out_of_847():
    truth = GroundTruth(repos={f"o/r{i}" for i in range(847)})
    s = score_sets([f"o/r{i}" for i in range(688)], truth.repos)
    assert round(s.recall, 4) == 0.8123
    assert s.precision == 1.0


def test_undefined_ratios_are_absent():
    s = score_sets([], [])
    assert s.precision is None and s.recall is None
    assert score_sets(["x"], []).recall is None
    assert score_sets([], ["x"]).precision is None


@settings(max_examples=100)
@given(st.sets(st.integers(0, 30)), st.sets(st.integers(0, 30)))
def test_scores_match_set_arithmetic(detected, truth):
    s = score_sets(detected, truth)
    tp = len(detected & truth)
    assert s.true_positives == tp
    assert s.precision == (tp / len(detected) if detected else None)
    assert s.recall == (tp / len(truth) if truth else None)


def test_false_flag_rate_counts_background_only():
    store, truth = generate(ScenarioConfig(injections=(Injection(20, 3, 5, 10),), **SMALL))
    background = sorted(set(store.stars_by_repo) - truth.repos)
    assert false_flag_rate(store, truth, list(truth.repos)) == 0.0
    assert false_flag_rate(store, truth, background[:5]) == pytest.approx(5 / len(background))


def test_background_only_rarely_yields_campaigns():
    clean = 0
    for seed in range(100):
        cfg = ScenarioConfig(rng_seed=seed, **SMALL)
        store, _ = generate(cfg)
        locked = detect_chunked(build_star_graph(store), cfg.window)
        ledger = merge_detections(filter_by_repo_threshold(detect_low_activity(store)), locked.stars)
        clean += not detect_campaigns(ledger, store)
    assert clean >= 99
