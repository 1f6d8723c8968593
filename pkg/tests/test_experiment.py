import json

import pytest

from lilchain import ExperimentConfig, ExperimentReport, replay, run_experiment
from lilchain.errors import ReplayError, ValidationError
from lilchain.experiment import check_artifacts

SMALL = """
[kernel]
type = finite
matrix = 0.9 0.1; 0.2 0.8

[observable]
type = table
values = 1, -2

[experiment]
seed = {seed}
n_max = 200000
variance_horizon = 2000
replicas = 32
lil_n_min = 1000

[checks]
enabled = e1, e2, e3, H3, slln, bc, lemma1
h3_replicas = 2000
bc_replicas = 2000
bc_grid = 64, 197, 256
"""


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("run")
    cfg = ExperimentConfig.from_text(SMALL.format(seed=0))
    return cfg, run_experiment(cfg, str(out)), out


def test_report_contents(small_run):
    cfg, rep, out = small_run
    d = rep.data
    assert d["fingerprint"]["config_hash"] == cfg.hash
    assert d["fingerprint"]["seed"] == 0
    assert abs(d["variance"]["corrector_exact"]["sigma2"] - 34 / 3) < 1e-12
    assert abs(d["certificate"]["gamma"] - 0.7) < 1e-12
    for section in ("corrector_exact", "green_kubo", "corrector_mc"):
        assert d["variance"][section]["method"]
    assert {c["id"] for c in d["conditions"]} == {"e1", "e2", "e3", "H3", "slln", "bc", "lemma1"}
    assert rep.exit_code == 0
    for name in ("report.json", "certificate.json", "trajectory.csv", "martingale.csv",
                 "corrector.csv", "lil.csv"):
        assert (out / name).exists()
    assert ExperimentReport.load(out / "report.json").numeric() == rep.numeric()


def test_every_artifact_carries_config_hash(small_run):
    cfg, rep, out = small_run
    check_artifacts(str(out), cfg.hash, rep.files)
    with pytest.raises(ValidationError):
        check_artifacts(str(out), "0" * 16, rep.files)


def test_mixed_config_outputs_rejected(tmp_path):
    cfg = ExperimentConfig.from_text(SMALL.format(seed=0))
    rep = run_experiment(cfg, str(tmp_path))
    other = ExperimentConfig.from_text(SMALL.format(seed=1))
    # swap in one artifact from another config
    run_experiment(other, str(tmp_path / "b"))
    (tmp_path / "martingale.csv").write_text((tmp_path / "b" / "martingale.csv").read_text())
    with pytest.raises(ValidationError):
        check_artifacts(str(tmp_path), cfg.hash, rep.files)


def test_degenerate_variance_fails(config_path, tmp_path):
    rep = run_experiment(ExperimentConfig.load(config_path("zero.cfg")), str(tmp_path))
    assert rep.exit_code == 2
    assert rep.data["conditions"][0]["id"] == "variance"


def test_no_gap_without_override(tmp_path):
    text = SMALL.format(seed=0).replace("0.9 0.1; 0.2 0.8", "0 1; 1 0").replace(
        "values = 1, -2", "values = 1, -1")
    rep = run_experiment(ExperimentConfig.from_text(text))
    assert rep.exit_code == 2 and rep.data["conditions"][0]["id"] == "certificate"


def test_replay_identical_across_threads(small_run, tmp_path):
    _, rep, out = small_run
    for threads in (1, 4):
        res = replay(str(out / "report.json"), threads=threads)
        assert res.identical, res.mismatches[:3]


def test_replay_detects_tampering(small_run, tmp_path):
    _, rep, out = small_run
    data = json.loads((out / "report.json").read_text())
    data["fingerprint"]["seed"] = 99
    path = tmp_path / "t.json"
    path.write_text(json.dumps(data))
    res = replay(str(path))
    assert not res.identical
    assert any(m["field"] == "/fingerprint/seed" for m in res.mismatches)

    data = json.loads((out / "report.json").read_text())
    data["config"] = data["config"].replace("seed = 0", "seed = 3")
    path.write_text(json.dumps(data))
    res = replay(str(path))
    assert any(m["field"] == "/fingerprint/config_hash" for m in res.mismatches)
    assert any(m["field"].startswith("/digests") for m in res.mismatches)


def test_replay_refuses_other_version(small_run, tmp_path):
    _, rep, out = small_run
    data = json.loads((out / "report.json").read_text())
    data["fingerprint"]["version"] = "0.0.1"
    path = tmp_path / "v.json"
    path.write_text(json.dumps(data))
    with pytest.raises(ReplayError, match="version"):
        replay(str(path))
