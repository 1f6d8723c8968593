import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lilchain import (ArKernel, FiniteKernel, IfsKernel, Initial, Observable, StateSpace,
                      Trajectory, apply_P, simulate, simulate_ensemble, step)
from lilchain.errors import DomainError, ValidationError
from lilchain.kernels import check_metric, resolve_threads
from lilchain.rng import stream


def test_rejects_bad_matrices():
    with pytest.raises(ValidationError):
        FiniteKernel([[0.5, 0.6], [0.5, 0.5]])
    with pytest.raises(ValidationError):
        FiniteKernel([[1.2, -0.2], [0.5, 0.5]])
    with pytest.raises(ValidationError):
        FiniteKernel([[1.0, 0.0]])


def test_metric_axioms_checked():
    check_metric(np.array([[0, 1], [1, 0]], float))
    with pytest.raises(ValidationError):
        check_metric(np.array([[0, 1], [2, 0]], float))  # asymmetric
    with pytest.raises(ValidationError):
        check_metric(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]], float))  # triangle
    with pytest.raises(ValidationError):
        check_metric(np.array([[0, 0], [0, 0]], float))  # not separating


def test_ifs_and_ar_validation():
    with pytest.raises(ValidationError):
        IfsKernel([1.0], [0.0], [1.0])
    with pytest.raises(ValidationError):
        IfsKernel([0.5, 0.5], [0.0, 0.8], [0.5, 0.5])  # leaves [0, 1]
    with pytest.raises(ValidationError):
        ArKernel(1.0)
    with pytest.raises(ValidationError):
        ArKernel(0.5, noise="student_t", df=2.5, delta=1.0)
    ArKernel(0.5, noise="student_t", df=4.0, delta=1.0)


def test_step_consumes_one_uniform(two_state):
    a = stream(7, "x")
    b = stream(7, "x")
    step(two_state, 0, a)
    b.random()
    assert a.random() == b.random()


def test_step_domain(two_state, dyadic_ifs):
    with pytest.raises(DomainError):
        step(two_state, 5, stream(0, "x"))
    with pytest.raises(DomainError):
        step(dyadic_ifs, 1.5, stream(0, "x"))


def test_simulate_is_deterministic(two_state):
    a = simulate(two_state, "dirac:0", 5000, 11)
    b = simulate(two_state, "dirac:0", 5000, 11)
    c = simulate(two_state, "dirac:0", 5000, 12)
    assert np.array_equal(a.states, b.states)
    assert not np.array_equal(a.states, c.states)
    assert a.kernel_hash == two_state.hash


def test_simulate_prefix_stable(dyadic_ifs):
    """A longer run extends a shorter one with the same seed."""
    short = simulate(dyadic_ifs, "dirac:0", 1000, 3).states
    long = simulate(dyadic_ifs, "dirac:0", 300_000, 3).states
    assert np.array_equal(short, long[:1001])


def test_two_state_frequencies(two_state):
    x = simulate(two_state, "dirac:0", 200_000, 1).states
    assert abs(np.mean(x == 0) - 2 / 3) < 0.01


def test_ensemble_independent_of_threads(dyadic_ifs):
    a = simulate_ensemble(dyadic_ifs, "uniform", 50, 10_000, 5, threads=1)
    b = simulate_ensemble(dyadic_ifs, "uniform", 50, 10_000, 5, threads=4)
    assert np.array_equal(a, b)


def test_trajectory_csv_roundtrip(tmp_path, two_state, dyadic_ifs):
    for k in (two_state, dyadic_ifs):
        t = simulate(k, "dirac:0", 100, 4)
        path = tmp_path / "t.csv"
        t.to_csv(path)
        header = path.read_text().splitlines()[0]
        assert "seed=4" in header and f"kernel_hash={k.hash}" in header
        back = Trajectory.from_csv(path)
        assert np.array_equal(back.states, t.states)
        assert back.kernel_hash == k.hash and back.seed == 4


def test_initial_parse():
    assert Initial.parse("dirac:1").describe() == "dirac:1"
    assert Initial.parse("uniform").kind == "uniform"
    with pytest.raises(ValidationError):
        Initial.parse("gaussian")


def test_stationary_initial_ar():
    k = ArKernel(0.5)
    x = simulate_ensemble(k, "stationary", 0, 100_000, 0)[0]
    assert abs(np.var(x) - 4 / 3) < 0.03


@given(st.integers(2, 5), st.integers(0, 2 ** 31))
def test_apply_P_matches_expectation(m, seed):
    rng = np.random.default_rng(seed)
    p = rng.random((m, m)) + 0.01
    p /= p.sum(axis=1, keepdims=True)
    k = FiniteKernel(p)
    f = rng.normal(size=m)
    pf = apply_P(k, f)
    assert np.allclose(pf, p @ f, atol=1e-14)
    # P preserves constants and is a contraction in sup norm
    assert np.allclose(apply_P(k, np.ones(m)), 1.0)
    assert np.max(np.abs(pf)) <= np.max(np.abs(f)) + 1e-12


def test_observable_lipschitz_from_table():
    psi = Observable.from_table([1.0, -2.0, 0.5])
    assert psi.lipschitz == 3.0
    assert Observable.zero().is_zero


def test_state_space_kinds():
    assert StateSpace.finite(3).diameter == 1.0
    assert StateSpace.interval(0, 2).diameter == 2.0
    with pytest.raises(ValidationError):
        StateSpace.interval(0, 1, x0=3)


def test_resolve_threads(monkeypatch):
    monkeypatch.setenv("LILCHAIN_THREADS", "6")
    assert resolve_threads(None) == 6
    assert resolve_threads(2) == 2
    monkeypatch.delenv("LILCHAIN_THREADS")
    assert resolve_threads(None) == 1
