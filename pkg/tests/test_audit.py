import math
import types

import numpy as np
import pytest

from lilchain import (ConditionReport, FiniteKernel, Observable, ZLaw, audit_h_lipschitz,
                      build_corrector, certify_contraction, check_borel_cantelli, check_e1_e2,
                      check_e3, check_slln, exit_code, sigma2_corrector, simulate,
                      stationary_finite)
from lilchain.audit import FAIL, INCONCLUSIVE, PASS, checkpoints, g_nk, oscillation_cutoff
from lilchain.errors import ValidationError
from lilchain.martingale import ensemble_differences, iid_gaussian_differences
from lilchain.wasserstein import ContractionCertificate, default_pairs


def small_instance(P, psi):
    k = FiniteKernel(P)
    mu = stationary_finite(k)
    v = np.array(psi, float)
    v -= mu.weights @ v
    ps = Observable.from_table(v)
    chi = build_corrector(k, ps, mu)
    s2 = sigma2_corrector(k, chi, mu).sigma2
    cert = certify_contraction(k, default_pairs(k), [1, 2, 4, 8])
    return k, ps, chi, s2, cert


def test_exit_codes():
    p = ConditionReport("a", PASS)
    f = ConditionReport("b", FAIL)
    i = ConditionReport("c", INCONCLUSIVE)
    assert exit_code([p, p]) == 0
    assert exit_code([p, i]) == 3
    assert exit_code([i, f]) == 2
    assert exit_code([]) == 0


def test_checkpoints():
    c = checkpoints(1000)
    assert c[0] == 100 and c[-1] == 1000 and c == sorted(set(c))


def test_lemma1_two_state_trivial_integrand(two_state, two_state_psi):
    """At n = k = 1 the oracle chain saturates g at 1, so H is constant."""
    k, ps, chi, s2, cert = small_instance(two_state.matrix, two_state_psi.table)
    a = audit_h_lipschitz(k, ps, 1, 1, cert, chi, s2)
    assert a.passed and a.measured == 0.0
    assert abs(a.bound - a.L * 1.7 / 0.51) < 1e-9


@pytest.mark.parametrize("P,psi", [
    ([[0.6, 0.3, 0.1], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]], [0.3, 0.0, -0.3]),
    ([[0.9, 0.1], [0.2, 0.8]], [0.1, -0.2]),
    ([[0.7, 0.3], [0.4, 0.6]], [0.5, -0.5]),
])
@pytest.mark.parametrize("n,kk", [(1, 1), (1, 2), (2, 1)])
def test_lemma1_nontrivial(P, psi, n, kk):
    k, ps, chi, s2, cert = small_instance(P, psi)
    a = audit_h_lipschitz(k, ps, n, kk, cert, chi, s2)
    assert 0.0 < a.measured <= a.bound
    assert a.measured_g > 0


def test_lemma1_H_matches_simulation():
    """Independent check of the enumeration: average g over simulated Y-chains."""
    P = [[0.6, 0.3, 0.1], [0.2, 0.6, 0.2], [0.1, 0.3, 0.6]]
    k, ps, chi, s2, cert = small_instance(P, [0.3, 0.0, -0.3])
    n, kk = 1, 1
    exps = [1, 2, 1, 2]
    rng = np.random.default_rng(0)
    R = 200_000
    cum = [np.cumsum(np.linalg.matrix_power(k.matrix, e), axis=1) for e in exps]
    chi_v, psi_v = chi.chi(np.arange(3)), ps.values(3)
    H_mc = []
    for x in range(3):
        y = np.full(R, x)
        cols = []
        for c in cum:
            u = rng.random(R)
            y = (u[:, None] > c[y]).sum(axis=1)
            cols.append(y)
        H_mc.append(g_nk(np.stack(cols, axis=1), chi_v, psi_v, n, kk, s2).mean())
    a = audit_h_lipschitz(k, ps, n, kk, cert, chi, s2, step_exponents=exps)
    lip_mc = max(abs(H_mc[i] - H_mc[j]) for i in range(3) for j in range(i + 1, 3))
    assert abs(lip_mc - a.measured) < 0.01


def test_lemma1_rejects_bad_certificate(two_state, two_state_psi):
    k, ps, chi, s2, _ = small_instance(two_state.matrix, two_state_psi.table)
    with pytest.raises(ValidationError):
        ContractionCertificate(3.0, 0.9, 2, 7.29, "manual", [])
    # the audit re-checks even objects that bypassed construction-time validation
    bad = types.SimpleNamespace(c=3.0, gamma=0.9, n0=2, gamma0=7.29)
    with pytest.raises(ValidationError):
        audit_h_lipschitz(k, ps, 1, 1, bad, chi, s2)


def test_oscillation_cutoff():
    assert oscillation_cutoff(7.0, 1.0) == 197
    assert oscillation_cutoff(1.0, 1.0) == 5
    n = oscillation_cutoff(2.5, 0.3)
    assert 0.3 * math.sqrt(n) / 2 > 2.5 >= 0.3 * math.sqrt(n - 1) / 2


def test_borel_cantelli_two_state(two_state, two_state_psi):
    chi = build_corrector(two_state, two_state_psi)
    r = check_borel_cantelli(two_state, chi, two_state_psi, 1.0, [64, 196, 197, 256], 2000, 0)
    assert r.verdict == PASS
    assert r.summary["cutoff"] == 197
    past = [d for d in r.diagnostics if d["n"] >= 197]
    assert past and all(d["value"] == 0.0 for d in past)


def test_e1_e2_exact_two_state(two_state, two_state_psi):
    chi = build_corrector(two_state, two_state_psi)
    law = ZLaw.exact_finite(two_state, chi, "dirac:0", 10_000)
    reps = check_e1_e2(law, 1.0, 1.0, (0.5, 1.0, 2.0))
    assert [r.id for r in reps] == ["e1", "e2"]
    assert all(r.verdict == PASS for r in reps)
    rows = [reps[0].summary] + [v for k, v in reps[1].summary.items() if k.startswith("eps")]
    for row in rows:
        assert row["tail_bound"] < 0.1 * row["partial_sum"]


def test_e1_e2_iid_control():
    law = ZLaw.from_ensemble(iid_gaussian_differences(10_000, 2048, 0))
    reps = check_e1_e2(law, 1.0)
    assert all(r.verdict == PASS for r in reps)
    with pytest.raises(ValidationError):
        check_e1_e2(ZLaw.from_ensemble(iid_gaussian_differences(100, 8, 0)))


def test_e1_e2_heavy_tail_not_pass():
    """Differences without a finite third moment must not be certified."""
    rng = np.random.default_rng(0)
    z = rng.standard_t(2.2, size=(4000, 256))
    reps = check_e1_e2(ZLaw.from_ensemble(z), 1.0)
    assert any(r.verdict != PASS for r in reps)


def test_e3_and_slln(two_state, two_state_psi):
    from lilchain import decompose

    chi = build_corrector(two_state, two_state_psi)
    s = decompose(simulate(two_state, "dirac:0", 200_000, 0), chi)
    assert check_e3(s.Z, 34 / 3, 2).verdict == PASS
    assert check_e3(s.Z, 2 * 34 / 3, 2).verdict == FAIL
    assert check_slln(s.W, math.sqrt(34 / 3)).verdict == PASS
    drift = s.W + 0.5 * np.arange(s.W.size)
    assert check_slln(drift, math.sqrt(34 / 3)).verdict == FAIL


def test_report_json_shape(two_state, two_state_psi):
    chi = build_corrector(two_state, two_state_psi)
    z, _ = ensemble_differences(two_state, chi, "dirac:0", 500, 64, 0)
    r = check_e3(z[:, 0], 34 / 3, min_length=100)
    d = r.to_dict()
    assert set(d) >= {"id", "params", "diagnostics", "verdict"}
    for row in d["diagnostics"]:
        assert {"n", "value", "bound"} <= set(row)
