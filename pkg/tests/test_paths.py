import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lilchain import (PolygonalPath, build_eta, build_theta, cluster_tracker, dist_to_K,
                      functional_eval, path_energy, sup_distance)
from lilchain._backend import _core_py, core
from lilchain.errors import DegenerateVariance, ValidationError
from lilchain.paths import (K_TARGETS, coarsen, corridor_projection, geometric_subsequence,
                            theta_from_increments,
                            lil_ratio, lil_running_max, lil_scale, parse_subsequence,
                            project_to_K, theta_stream)

from oracles import dist_to_K_bruteforce, taut_string_qp


def random_path(rng, k):
    t = np.concatenate([[0.0], np.sort(rng.uniform(0.02, 0.98, size=k - 1)), [1.0]])
    t = np.unique(t)
    v = np.concatenate([[0.0], rng.normal(scale=1.2, size=t.size - 1)])
    return PolygonalPath(t, v)


paths = st.builds(lambda seed, k: random_path(np.random.default_rng(seed), k),
                  st.integers(0, 2 ** 31), st.integers(1, 6))


def test_path_validation():
    with pytest.raises(ValidationError):
        PolygonalPath([0.0, 0.5], [0.0, 1.0])
    with pytest.raises(ValidationError):
        PolygonalPath([0.0, 1.0], [0.1, 1.0])
    with pytest.raises(ValidationError):
        PolygonalPath([0.0, 0.5, 0.5, 1.0], [0, 1, 1, 1])


def test_energy_and_functionals():
    ident = PolygonalPath.from_function(lambda t: t, 4)
    assert abs(path_energy(ident) - 1.0) < 1e-15
    assert functional_eval(ident, "endpoint") == 1.0
    assert functional_eval(ident, "sup") == 1.0
    assert abs(functional_eval(ident, "integral") - 0.5) < 1e-15
    assert dist_to_K(ident) == 0.0
    assert K_TARGETS["integral"] == 1 / math.sqrt(3)


def test_dist_of_2t():
    assert abs(dist_to_K(PolygonalPath.from_function(lambda t: 2 * t, 1)) - 1.0) <= 1e-6


@given(st.floats(1.0, 6.0))
def test_scale_law_linear(c):
    """For p(t) = c t with c >= 1 the nearest point of K is t, at distance c - 1."""
    p = PolygonalPath.from_function(lambda t: c * t, 3)
    assert abs(dist_to_K(p) - (c - 1.0)) <= 1e-7


@given(paths, st.floats(0.0, 3.0))
def test_dist_monotone_in_scale(p, lam):
    """dist(lam p) <= dist(p) for lam <= 1 since K is convex and contains 0."""
    lam = min(lam, 1.0)
    assert dist_to_K(p.scaled(lam)) <= dist_to_K(p) + 1e-7


@given(paths, paths)
def test_dist_is_1_lipschitz(p, q):
    assert abs(dist_to_K(p) - dist_to_K(q)) <= sup_distance(p, q) + 2e-8


@given(paths, st.floats(0.01, 2.0))
def test_projection_is_feasible(p, eps):
    x, energy = corridor_projection(p, eps)
    assert abs(path_energy(x) - energy) <= 1e-9 * max(1.0, energy)
    assert np.all(np.abs(x.v - p.v) <= eps + 1e-12)
    proj = project_to_K(p, dist_to_K(p) + 1e-8)
    assert proj is not None and path_energy(proj) <= 1.0 + 1e-9


def test_taut_string_matches_qp(rng):
    for _ in range(25):
        n = int(rng.integers(3, 9))
        t = np.concatenate([[0.0], np.sort(rng.uniform(0.05, 0.95, n - 2)), [1.0]])
        centre = rng.normal(size=n)
        width = rng.uniform(0.05, 1.0, size=n)
        lo, hi = centre - width, centre + width
        lo[0] = hi[0] = 0.0
        lo[-1] = hi[-1] = centre[-1]
        for impl in (core, _core_py):
            pt, pv = impl.taut_string(t, lo, hi)
            e = float(np.sum(np.diff(pv) ** 2 / np.diff(pt)))
            ref, _ = taut_string_qp(t, lo, hi)
            assert abs(e - ref) <= 1e-6 * max(1.0, ref)


def test_dist_matches_bruteforce(rng):
    for _ in range(30):
        p = random_path(rng, int(rng.integers(2, 7)))
        assert abs(dist_to_K(p, tol=1e-9) - dist_to_K_bruteforce(p.t, p.v)) <= 1e-6


def test_coarsen_is_upper_bound(rng):
    w = np.concatenate([[0.0], np.cumsum(rng.normal(size=20_000))])
    p = build_theta(w, 1.0, 20_000)
    q, err = coarsen(p, 512)
    assert q.t.size <= 512 and err >= 0
    assert sup_distance(p, q) <= err + 1e-12
    assert dist_to_K(p, max_points=512) >= dist_to_K(p, max_points=1 << 16) - 1e-8


def test_theta_vertices():
    w = np.arange(101, dtype=float)
    p = build_theta(w, 2.0, 100)
    assert p.t.size == 101 and p.t[-1] == 1.0
    assert abs(p.v[-1] - 100 / (2.0 * lil_scale(100))) < 1e-15
    assert build_theta(w, 1.0, 2).v.tolist() == [0.0, 0.0]
    with pytest.raises(DegenerateVariance):
        build_theta(w, 0.0, 10)


@given(st.integers(0, 2 ** 31), st.integers(10, 300), st.floats(0.2, 5.0))
def test_theta_eta_equivalence(seed, n, sigma):
    """With s_k^2 = k sigma^2 exactly, eta (sigma-n) coincides with theta on S."""
    z = np.random.default_rng(seed).normal(scale=sigma, size=n)
    s2 = sigma ** 2 * np.arange(1, n + 1)
    eta = build_eta(z, s2, n, "sigma-n", sigma=sigma)
    theta = build_theta(np.concatenate([[0.0], np.cumsum(z)]), sigma, n)
    assert np.allclose(eta.t, theta.t, atol=1e-15)
    assert np.allclose(eta.v, theta.v, rtol=1e-12, atol=1e-15)
    if sigma == 1.0:
        vt = build_eta(z, s2, n)
        assert np.allclose(vt.v, theta.v)


def test_eta_rejects_ties():
    with pytest.raises(ValidationError):
        build_eta(np.ones(5), np.array([1.0, 2.0, 2.0, 3.0, 4.0]), 5)


def test_path_csv_roundtrip(tmp_path):
    p = PolygonalPath([0.0, 0.25, 1.0], [0.0, 0.5, -0.1], n=7, variant="theta")
    f = tmp_path / "p.csv"
    p.to_csv(f)
    assert f.read_text().splitlines()[1] == "t,value"
    q = PolygonalPath.from_csv(f)
    assert np.array_equal(q.t, p.t) and np.array_equal(q.v, p.v) and q.n == 7


def test_subsequences():
    g = geometric_subsequence(10_000, 1.5)
    assert g[0] == 16 and g[-1] <= 10_000
    assert all(b > a for a, b in zip(g, g[1:]))
    assert parse_subsequence("dyadic", 1024) == [16, 32, 64, 128, 256, 512, 1024]
    with pytest.raises(ValidationError):
        parse_subsequence("harmonic", 100)


def test_lil_ratio_normalization():
    w = np.arange(1001, dtype=float)
    r = lil_ratio(w, 1.0, 16)
    n = 500
    assert abs(r[n - 16] - n / math.sqrt(2 * n * math.log(math.log(n)))) < 1e-12
    assert lil_running_max(w, 1.0, 100, 1000) == pytest.approx(r[100 - 16:].max())


def test_cluster_tracker(rng):
    w = np.concatenate([[0.0], np.cumsum(rng.normal(size=50_000))])
    n_list = geometric_subsequence(50_000)
    rep = cluster_tracker(theta_stream(w, 1.0, n_list), window=5)
    d = rep.to_dict()
    assert d["n_list"] == n_list
    for k in ("endpoint", "sup", "integral"):
        assert len(d["functionals"][k]) == len(n_list)
    assert rep.final_max("sup") >= rep.final_max("endpoint")
    assert rep.recent_min_dist >= 0


def test_theta_worked_example():
    """Increments 1, 1, -2, 1 with sigma = 1: theta_4(1/2) = 2 / sqrt(8 log log 4)."""
    p = theta_from_increments([1.0, 1.0, -2.0, 1.0], 1.0, 4)
    expected = 2.0 / math.sqrt(8.0 * math.log(math.log(4.0)))
    assert abs(p(0.5) - expected) < 1e-15
    assert abs(p(0.5) - 1.23724) < 1e-5
