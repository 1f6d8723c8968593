import json

import pytest

from lilchain.cli import main

SMALL = """
[kernel]
type = finite
matrix = 0.9 0.1; 0.2 0.8

[observable]
type = table
values = 1, -2

[experiment]
n_max = 30000
variance_horizon = 1000
replicas = 16
lil_n_min = 1000

[checks]
enabled = e3, slln, lemma1
"""


@pytest.fixture
def cfg(tmp_path):
    p = tmp_path / "small.cfg"
    p.write_text(SMALL)
    return str(p)


def run(*argv):
    return main(["--quiet", *argv])


def test_simulate(tmp_path, cfg):
    out = tmp_path / "o"
    assert run("simulate", "--kernel", cfg, "--n", "1e3", "--seed", "4", "--out", str(out)) == 0
    lines = (out / "trajectory.csv").read_text().splitlines()
    assert lines[0].startswith("# seed=4 kernel_hash=") and lines[1] == "step,state"
    assert len(lines) == 1003


def test_global_flags_before_subcommand(tmp_path, cfg):
    out = tmp_path / "g"
    assert main(["--seed", "9", "--out", str(out), "--quiet", "simulate", "--kernel", cfg,
                 "--n", "10"]) == 0
    assert "seed=9" in (out / "trajectory.csv").read_text().splitlines()[0]


def test_contraction(tmp_path, cfg):
    assert run("contraction", "--kernel", cfg, "--horizons", "1,2,4", "--out",
               str(tmp_path)) == 0
    cert = json.loads((tmp_path / "certificate.json").read_text())
    assert abs(cert["gamma"] - 0.7) < 1e-12 and cert["n0"] == 2


def test_contraction_no_gap(tmp_path):
    p = tmp_path / "per.cfg"
    p.write_text("[kernel]\ntype = finite\nmatrix = 0 1; 1 0\n")
    assert run("contraction", "--kernel", str(p), "--out", str(tmp_path)) == 2


def test_corrector_and_variance(tmp_path, cfg):
    assert run("corrector", "--config", cfg, "--out", str(tmp_path)) == 0
    rows = (tmp_path / "corrector.csv").read_text().splitlines()
    assert rows[1] == "state,chi,h" and rows[2].startswith("0,2.33333")
    assert run("variance", "--config", cfg, "--mode", "exact", "--out", str(tmp_path)) == 0
    v = json.loads((tmp_path / "variance.json").read_text())
    assert abs(v["exact"]["sigma2"] - 34 / 3) < 1e-12


def test_variance_degenerate(tmp_path, config_path):
    assert run("variance", "--config", config_path("zero.cfg"), "--mode", "exact",
               "--out", str(tmp_path)) == 2


def test_audit_and_report(tmp_path, cfg):
    assert run("audit", "--check", "e3,lemma1", "--config", cfg, "--out", str(tmp_path)) == 0
    a = json.loads((tmp_path / "audit.json").read_text())
    assert [c["id"] for c in a["conditions"]] == ["e3", "lemma1"]
    assert run("audit", "--check", "e7", "--config", cfg, "--out", str(tmp_path)) == 1
    rep = tmp_path / "rep"
    assert run("report", "--config", cfg, "--out", str(rep)) == 0
    assert run("replay", "--report", str(rep / "report.json"), "--threads", "3",
               "--out", str(tmp_path / "rp")) == 0
    data = json.loads((rep / "report.json").read_text())
    data["fingerprint"]["seed"] = 5
    (tmp_path / "bad.json").write_text(json.dumps(data))
    assert run("replay", "--report", str(tmp_path / "bad.json"), "--out",
               str(tmp_path / "rp2")) == 2


def test_lil_and_strassen(tmp_path, cfg):
    rep = tmp_path / "rep"
    run("report", "--config", cfg, "--out", str(rep))
    code = run("strassen", "--input", str(rep / "martingale.csv"), "--nmax", "3e4",
               "--sigma", str((34 / 3) ** 0.5), "--out", str(tmp_path))
    s = json.loads((tmp_path / "strassen.json").read_text())
    assert code == (0 if s["verdict"] == "pass" else 2)
    assert set(s["functionals"]) == {"endpoint", "sup", "integral"}
    assert (tmp_path / "theta.csv").read_text().splitlines()[1] == "t,value"
    code = run("lil", "--config", cfg, "--out", str(tmp_path))
    lil = json.loads((tmp_path / "lil.json").read_text())
    assert code == (0 if lil["verdict"] == "pass" else 2)


def test_exit_code_3_for_inconclusive(monkeypatch, tmp_path, cfg):
    from lilchain import audit as audit_mod
    from lilchain import experiment

    orig = experiment.check_e3

    def fake(*a, **k):
        r = orig(*a, **k)
        return audit_mod.ConditionReport(r.id, audit_mod.INCONCLUSIVE, r.params, r.diagnostics)

    monkeypatch.setattr(experiment, "check_e3", fake)
    assert run("audit", "--check", "e3", "--config", cfg, "--out", str(tmp_path)) == 3


def test_threads_env(monkeypatch, tmp_path, cfg):
    monkeypatch.setenv("LILCHAIN_THREADS", "2")
    rep = tmp_path / "r"
    assert run("report", "--config", cfg, "--out", str(rep)) == 0
    assert json.loads((rep / "report.json").read_text())["runtime"]["threads"] == 2


def test_missing_file(tmp_path):
    assert run("report", "--config", str(tmp_path / "nope.cfg")) == 1
