import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lilchain import (CANONICAL, LITERAL, ArKernel, FiniteKernel, IfsKernel, Observable,
                      build_corrector, certify_contraction, corrector_finite, corrector_mc,
                      stationary_finite)
from lilchain.corrector import stationary_empirical
from lilchain.errors import CenteringError, ValidationError
from lilchain.martingale import martingale_residual
from lilchain.wasserstein import default_pairs


def test_stationary_two_state(two_state):
    mu = stationary_finite(two_state)
    assert np.allclose(mu.weights, [2 / 3, 1 / 3], atol=1e-15)


def test_two_state_corrector_values(two_state, two_state_psi):
    chi = build_corrector(two_state, two_state_psi)
    assert np.allclose(chi.chi_table, [7 / 3, -14 / 3], atol=1e-12)
    assert np.allclose(chi.h_table, [10 / 3, -20 / 3], atol=1e-12)
    assert chi.convention == CANONICAL
    assert chi.residual < 1e-12
    assert abs(chi.oscillation - 7.0) < 1e-12


@given(st.integers(2, 5), st.integers(0, 2 ** 31))
def test_poisson_equation_random_chains(m, seed):
    rng = np.random.default_rng(seed)
    p = rng.random((m, m)) + 0.05
    p /= p.sum(axis=1, keepdims=True)
    k = FiniteKernel(p)
    mu = stationary_finite(k)
    raw = rng.normal(size=m)
    psi = Observable.from_table(raw - mu.weights @ raw)
    chi = corrector_finite(k, psi, mu)
    # chi = P h, h - P h = psi, and chi is the series sum_{i>=1} P^i psi
    h = chi.h_table
    assert np.allclose(h - p @ h, psi.table, atol=1e-10)
    series = sum(np.linalg.matrix_power(p, i) @ psi.table for i in range(1, 400))
    assert np.allclose(chi.chi_table, series, atol=1e-8)
    assert np.max(np.abs(martingale_residual(k, chi))) < 1e-10


def test_literal_convention_is_not_a_martingale(two_state, two_state_psi):
    mu = stationary_finite(two_state)
    lit = corrector_finite(two_state, two_state_psi, mu, convention=LITERAL)
    res = martingale_residual(two_state, lit)
    gap = np.abs(two_state.apply(two_state_psi.table) - two_state_psi.table)
    assert np.allclose(np.abs(res), gap, atol=1e-12)
    assert np.max(np.abs(res)) > 0.1


def test_uncentered_observable_rejected(two_state):
    with pytest.raises(CenteringError):
        build_corrector(two_state, Observable.from_table([1.0, 1.0]))


def test_affine_closed_form(dyadic_ifs, ifs_psi):
    chi = build_corrector(dyadic_ifs, ifs_psi)
    x = np.linspace(0, 1, 11)
    assert np.allclose(chi.h(x), 2 * x - 1, atol=1e-15)
    assert np.allclose(chi.chi(x), x - 0.5, atol=1e-15)
    assert chi.oscillation == 1.0
    with pytest.raises(ValidationError):
        build_corrector(dyadic_ifs, Observable(lambda x: np.sin(x), 1.0))


def test_ar_closed_form_conditional_variance():
    k = ArKernel(0.5)
    chi = build_corrector(k, Observable.linear_fn(1.0))
    # h = x / (1 - a); Var(h(X')) = noise variance / (1 - a)^2 = 4
    assert np.allclose(chi.conditional_variance(np.array([0.0, 3.0])), 4.0)


def test_corrector_mc_matches_closed_form(dyadic_ifs, ifs_psi):
    cert = certify_contraction(dyadic_ifs, default_pairs(dyadic_ifs), [1, 2, 4, 8],
                               replicas=20_000)
    for x in (0.0, 0.3, 1.0):
        est = corrector_mc(dyadic_ifs, ifs_psi, x, 30, 20_000, seed=2, cert=cert)
        assert abs(est.estimate - (2 * x - 1)) <= est.error_bound
        assert est.truncation_bound < 1e-6


def test_corrector_mc_requires_certificate(dyadic_ifs, ifs_psi):
    with pytest.raises(ValidationError):
        corrector_mc(dyadic_ifs, ifs_psi, 0.0, 10, 100, seed=0)
    est = corrector_mc(dyadic_ifs, ifs_psi, 0.0, 10, 100, seed=0, override=True)
    assert est.error_bound == np.inf


def test_stationary_empirical_ifs_is_uniform(dyadic_ifs):
    mu = stationary_empirical(dyadic_ifs, 60, 20_000, 0)
    assert abs(mu.mean(lambda x: x) - 0.5) < 0.01
