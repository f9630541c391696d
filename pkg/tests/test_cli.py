import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest

from fakestars.cli import main
from fakestars.events import dump_event_stream
from fakestars.synth import Injection, ScenarioConfig, generate

ROOT = Path(__file__).resolve().parent.parent
DEMO = ROOT / "configs" / "demo.yaml"
STAGES = ["synth", "detect", "campaigns", "evaluate", "measure", "regress", "enrich", "report"]


def run_all(out: Path, config: Path = DEMO, plot_data: bool = True) -> None:
    for stage in STAGES:
        argv = [stage, "--config", str(config), "--out", str(out)]
        if plot_data:
            argv.append("--plot-data")
        assert main(argv) == 0, stage


@pytest.fixture(scope="module")
def demo_out(tmp_path_factory):
    out = tmp_path_factory.mktemp("demo")
    run_all(out)
    return out


def test_demo_report_matches_scenario_counts(demo_out):
    report = json.loads((demo_out / "report.json").read_text())
    # three 60x12 lockstep blocks with every account on every repo, one 80-account throw-away campaign
    assert report["fake_stars_lockstep"] == 3 * 12 * 60
    assert report["fake_stars_low_activity"] == 80
    assert report["campaign_repos"] == 3 * 12 + 1
    assert report["campaign_accounts"] == 3 * 60 + 80
    assert report["evaluation"]["repos"]["recall"] == 1.0
    text = (demo_out / "report.txt").read_text()
    assert "37 repositories with fake star campaigns, 260 participating accounts" in text


def test_demo_artifacts_present(demo_out):
    for name in ["events.jsonl", "ground_truth.csv", "low_activity.csv", "lockstep_groups.jsonl",
                 "lockstep_stars.csv", "fake_stars.csv", "chunks.csv", "campaigns.jsonl", "campaigns_summary.csv",
                 "evaluation.json", "prevalence.csv", "clusters.csv", "name_tokens.csv", "panel.csv",
                 "regression_ar1.txt", "regression_ar2.txt", "enrich.json", "report.json",
                 "plot_duration_ccdf.csv", "plot_event_types.csv"]:
        assert (demo_out / name).is_file(), name
    with open(demo_out / "prevalence.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 12
    enrich = json.loads((demo_out / "enrich.json").read_text())
    assert enrich["deletion_repositories"]["detected"]["resolved"] == 37


def test_rerunning_a_stage_is_byte_identical(demo_out):
    before = {p.name: p.read_bytes() for p in demo_out.iterdir()}
    assert main(["detect", "--config", str(DEMO), "--out", str(demo_out), "--threads", "4"]) == 0
    assert main(["measure", "--config", str(DEMO), "--out", str(demo_out), "--plot-data"]) == 0
    after = {p.name: p.read_bytes() for p in demo_out.iterdir()}
    assert before == after


def test_detect_on_planted_block_fixture(tmp_path):
    cfg = ScenarioConfig(n_accounts=4000, n_repos=1000, star_rate=30.0, end="2024-07-01T00:00:00Z",
                         injections=(Injection(60, 12, 5, 60, spread_days=5, start="2024-03-03T00:00:00Z"),))
    store, truth = generate(cfg)
    data = tmp_path / "events.json"
    with open(data, "w") as fh:
        dump_event_stream(store, fh)
    conf = tmp_path / "c.yaml"
    conf.write_text(f"input_paths: [{data.name}]\nwindow: ['2024-01-01T00:00:00Z', '2024-07-01T00:00:00Z']\n")
    out = tmp_path / "out"
    assert main(["ingest", "--config", str(conf), "--out", str(out)]) == 0
    assert main(["detect", "--config", str(conf), "--out", str(out)]) == 0
    with open(out / "lockstep_stars.csv") as fh:
        flagged = {(r["actor_id"], r["repo_id"]) for r in csv.DictReader(fh)}
    assert {(a, r) for a, r, _ in truth.stars} <= flagged
    group = json.loads((out / "lockstep_groups.jsonl").read_text().splitlines()[0])
    assert set(group["repos"]) == truth.repos


def test_campaigns_on_empty_ledger(tmp_path, capsys):
    conf = tmp_path / "c.yaml"
    conf.write_text("scenario: {n_accounts: 200, n_repos: 50, star_rate: 5.0}\n")
    out = tmp_path / "out"
    assert main(["synth", "--config", str(conf), "--out", str(out)]) == 0
    assert main(["detect", "--config", str(conf), "--out", str(out)]) == 0
    assert (out / "fake_stars.csv").read_text().count("\n") == 1
    assert main(["campaigns", "--config", str(conf), "--out", str(out)]) == 0
    assert (out / "campaigns.jsonl").read_text() == ""
    assert '"campaign_repos": 0' in capsys.readouterr().out


def test_missing_upstream_fails_without_writing(tmp_path, capsys):
    out = tmp_path / "out"
    out.mkdir()
    assert main(["campaigns", "--out", str(out)]) != 0
    assert "missing upstream artifacts" in capsys.readouterr().err
    assert list(out.iterdir()) == []
    assert main(["detect", "--out", str(tmp_path / "nowhere")]) != 0


def test_invalid_config_key_fails_before_writing(tmp_path, capsys):
    conf = tmp_path / "c.yaml"
    conf.write_text("lockstep: {n: 5, wobble: 2}\n")
    out = tmp_path / "out"
    assert main(["synth", "--config", str(conf), "--out", str(out)]) == 2
    assert "wobble" in capsys.readouterr().err
    assert not out.exists()


def test_missing_input_file(tmp_path, capsys):
    conf = tmp_path / "c.yaml"
    conf.write_text("input_paths: [nope.json]\n")
    assert main(["ingest", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2
    assert "not found" in capsys.readouterr().err


def test_corrupt_input_file(tmp_path, capsys):
    data = tmp_path / "junk.json"
    data.write_text("garbage\n" * 5)
    conf = tmp_path / "c.yaml"
    conf.write_text(f"input_paths: [{data.name}]\n")
    assert main(["ingest", "--config", str(conf), "--out", str(tmp_path / "o")]) == 2
    assert "malformed" in capsys.readouterr().err


def test_bad_thread_count(capsys):
    assert main(["report", "--threads", "0"]) == 2


def test_dump_config_round_trips(tmp_path, capsys):
    assert main(["report", "--config", str(DEMO), "--out", str(tmp_path), "--dump-config"]) == 0
    dumped = tmp_path / "dumped.yaml"
    dumped.write_text(capsys.readouterr().out)
    capsys.readouterr()
    assert main(["report", "--config", str(dumped), "--dump-config"]) == 0
    assert capsys.readouterr().out == dumped.read_text()


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "fakestars", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for stage in STAGES + ["ingest"]:
        assert stage in res.stdout
