"""Wasserstein-1 distances and contraction certificates.

``w1_finite`` solves the transportation LP exactly (HiGHS dual simplex, a
vertex solution) for finitely supported measures. ``w1_empirical_1d`` uses
the quantile coupling, which is optimal on the line.

For finite kernels with the discrete metric, contraction of Dirac pairs
implies contraction of all measures (W1 is then total variation, and the
pair bound extends by convexity of the coupling). For other kernels the
certificate only covers the audited pairs.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from .errors import NoGapCertified, ValidationError
from .kernels import FiniteKernel, TransitionKernel, check_metric, coupled_ensembles


@dataclass(frozen=True, eq=False)
class FiniteMeasure:
    """Probability measure with finitely many atoms.

    Duplicate support points are merged by summing their weights.
    """

    support: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.support)
        w = np.asarray(self.weights, dtype=float)
        if s.shape != w.shape or s.ndim != 1 or s.size == 0:
            raise ValidationError("support and weights must be equal-length 1-D arrays")
        if np.any(w < 0):
            raise ValidationError("weights must be non-negative")
        if abs(w.sum() - 1.0) > 1e-12:
            raise ValidationError(f"weights sum to {w.sum()!r}, not 1")
        uniq, inv = np.unique(s, return_inverse=True)
        merged = np.zeros(uniq.shape[0])
        np.add.at(merged, inv, w)
        object.__setattr__(self, "support", uniq)
        object.__setattr__(self, "weights", merged)

    @classmethod
    def dirac(cls, x):
        return cls(np.array([x]), np.array([1.0]))

    @classmethod
    def from_vector(cls, w):
        """Measure on states ``0..m-1`` from a weight vector."""
        w = np.asarray(w, dtype=float)
        return cls(np.arange(w.size), w)

    @classmethod
    def empirical(cls, samples):
        s = np.asarray(samples)
        return cls(s, np.full(s.size, 1.0 / s.size))

    def mean(self, f=None) -> float:
        vals = self.support if f is None else f(self.support)
        return float(np.dot(self.weights, vals))


def _cost(mu: FiniteMeasure, nu: FiniteMeasure, metric) -> np.ndarray:
    if metric is None:
        return np.abs(mu.support.astype(float)[:, None] - nu.support.astype(float)[None, :])
    d = np.asarray(metric, dtype=float)
    pts = np.union1d(mu.support, nu.support).astype(np.int64)
    check_metric(d[np.ix_(pts, pts)])
    return d[np.ix_(mu.support.astype(np.int64), nu.support.astype(np.int64))]


def transport_plan(mu: FiniteMeasure, nu: FiniteMeasure, metric=None):
    """Optimal coupling and its cost.

    ``metric`` is a state-indexed distance matrix; when omitted the support
    points are reals and the cost is ``|x - y|``.
    """
    keep_a = mu.weights > 0
    keep_b = nu.weights > 0
    a = FiniteMeasure(mu.support[keep_a], mu.weights[keep_a] / mu.weights[keep_a].sum())
    b = FiniteMeasure(nu.support[keep_b], nu.weights[keep_b] / nu.weights[keep_b].sum())
    cost = _cost(a, b, metric)
    na, nb = cost.shape
    if na == 1 or nb == 1:
        plan = np.outer(a.weights, b.weights)
        return plan, float(np.sum(plan * cost))
    # row sums = a, column sums = b; the last column constraint is redundant
    rows = np.kron(np.eye(na), np.ones((1, nb)))
    cols = np.kron(np.ones((1, na)), np.eye(nb))[:-1]
    res = linprog(cost.ravel(), A_eq=np.vstack([rows, cols]),
                  b_eq=np.concatenate([a.weights, b.weights[:-1]]),
                  bounds=(0, None), method="highs-ds")
    if res.status != 0:  # pragma: no cover - LP is always feasible and bounded
        raise RuntimeError(f"transport LP failed: {res.message}")
    plan = np.clip(res.x.reshape(na, nb), 0.0, None)
    return plan, float(np.sum(plan * cost))


def w1_finite(mu: FiniteMeasure, nu: FiniteMeasure, metric=None) -> float:
    """Exact W1 between two finitely supported measures."""
    return transport_plan(mu, nu, metric)[1]


def w1_empirical_1d(xs, ys) -> float:
    """W1 between two equal-size samples on the line: mean gap of order statistics."""
    xs = np.sort(np.asarray(xs, dtype=float))
    ys = np.sort(np.asarray(ys, dtype=float))
    if xs.shape != ys.shape or xs.ndim != 1:
        raise ValidationError("samples must be 1-D with equal counts")
    if xs.size == 0:
        raise ValidationError("need at least one sample")
    return float(np.mean(np.abs(xs - ys)))


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


def compute_n0(c: float, gamma: float) -> tuple[int, float]:
    """Smallest ``n0 >= 2`` with ``c**2 * gamma**n0 < 1``, and that value."""
    if not 0 < gamma < 1:
        raise ValidationError("gamma must lie in (0, 1)")
    if c < 0:
        raise ValidationError("c must be non-negative")
    n0 = 2
    while c * c * gamma ** n0 >= 1.0:
        n0 += 1
    return n0, c * c * gamma ** n0


@dataclass(frozen=True)
class ContractionCertificate:
    c: float
    gamma: float
    n0: int
    gamma0: float
    provenance: str
    ratios: list = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        if not 0 < self.gamma < 1:
            raise ValidationError(f"gamma={self.gamma!r} outside (0, 1)")
        if self.n0 < 2:
            raise ValidationError("n0 must be >= 2")
        if not self.gamma0 < 1:
            raise ValidationError(f"gamma0={self.gamma0!r} is not below 1")
        if self.c < 0:
            raise ValidationError("c must be non-negative")

    def to_dict(self):
        return asdict(self)

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)

    @classmethod
    def from_dict(cls, d):
        return cls(float(d["c"]), float(d["gamma"]), int(d["n0"]), float(d["gamma0"]),
                   d.get("provenance", "exact"), list(d.get("ratios", [])))


def pair_distances(kernel: TransitionKernel, start_pairs, horizons, replicas=100_000,
                   seed=0, threads=None):
    """``d(delta_x P^n, delta_y P^n)`` for every pair and horizon.

    Exact for finite kernels; otherwise the empirical W1 between
    synchronously coupled replica ensembles.
    """
    horizons = sorted({int(h) for h in horizons})
    rows = []
    for x, y in start_pairs:
        if isinstance(kernel, FiniteKernel):
            metric = kernel.space.metric_matrix
            d0 = float(metric[int(x), int(y)])
            for n in horizons:
                pn = kernel.power(n)
                lhs = w1_finite(FiniteMeasure.from_vector(pn[int(x)]),
                                FiniteMeasure.from_vector(pn[int(y)]), metric)
                rows.append({"pair": [x, y], "n": n, "lhs": lhs, "d0": d0})
        else:
            d0 = float(kernel.space.dist(x, y))
            ex, ey = coupled_ensembles(kernel, [x, y], max(horizons), replicas, seed,
                                       purpose="certify", threads=threads)
            for n in horizons:
                rows.append({"pair": [x, y], "n": n, "lhs": w1_empirical_1d(ex[n], ey[n]),
                             "d0": d0})
    return rows


def fit_certificate(rows, provenance: str, tol: float = 1e-6) -> ContractionCertificate:
    """Fit ``(c, gamma)`` to a distance table; see ``certify_contraction``."""
    by_pair: dict = {}
    for r in rows:
        by_pair.setdefault(tuple(r["pair"]), []).append(r)
    if not any(r["d0"] > 0 for r in rows):
        raise ValidationError("need a start pair at positive distance")
    steps = []
    for pair_rows in by_pair.values():
        pair_rows = sorted(pair_rows, key=lambda r: r["n"])
        if pair_rows[0]["d0"] <= 0:
            continue
        if len(pair_rows) == 1:
            r = pair_rows[0]
            steps.append((r["lhs"] / r["d0"]) ** (1.0 / r["n"]))
        for a, b in zip(pair_rows, pair_rows[1:]):
            if a["lhs"] > 0:
                steps.append((b["lhs"] / a["lhs"]) ** (1.0 / (b["n"] - a["n"])))
    # every ensemble coalesced: any rate works, pick a small one
    gamma = max(steps) if steps else 0.5
    if gamma >= 1.0 - tol:
        table = [dict(r, ratio=r["lhs"] / r["d0"] if r["d0"] > 0 else None) for r in rows]
        raise NoGapCertified(f"fitted gamma={gamma:.6g} is not below 1 - {tol:g}",
                             diagnostics=table, gamma=gamma)
    gamma = max(gamma, 1e-12)
    c = 0.0
    for r in rows:
        if r["d0"] > 0:
            c = max(c, r["lhs"] / (gamma ** r["n"] * r["d0"]))
    n0, gamma0 = compute_n0(c, gamma)
    table = [{"pair": r["pair"], "n": r["n"], "lhs": r["lhs"],
              "bound": c * gamma ** r["n"] * r["d0"]} for r in rows]
    return ContractionCertificate(c, gamma, n0, gamma0, provenance, table)


def certify_contraction(kernel: TransitionKernel, start_pairs: Sequence, horizons: Sequence,
                        replicas: int = 100_000, seed: int = 0, tol: float = 1e-6,
                        threads: Optional[int] = None) -> ContractionCertificate:
    """Estimate ``(c, gamma, n0, gamma0)`` witnessing geometric W1 contraction.

    ``gamma`` is the largest per-step decay ratio between consecutive audited
    horizons; ``c`` is then the smallest constant making the bound hold on
    every audited horizon. Raises ``NoGapCertified`` when ``gamma`` is not
    below ``1 - tol``.
    """
    if not horizons:
        raise ValidationError("horizons must be nonempty")
    rows = pair_distances(kernel, start_pairs, horizons, replicas, seed, threads)
    provenance = "exact" if isinstance(kernel, FiniteKernel) else "empirical"
    return fit_certificate(rows, provenance, tol)


def default_pairs(kernel: TransitionKernel) -> list:
    """All state pairs for small finite kernels, the interval ends otherwise."""
    space = kernel.space
    if space.kind == "finite":
        m = space.size
        return [(i, j) for i in range(m) for j in range(i + 1, m)]
    if space.kind == "interval":
        return [(space.low, space.high)]
    return [(space.x0 - 1.0, space.x0 + 1.0)]


def dist_to_stationary(kernel: TransitionKernel, x, mu_star) -> float:
    """``d(delta_x, mu*)``; exact for finite kernels, empirical otherwise."""
    if isinstance(kernel, FiniteKernel):
        return w1_finite(FiniteMeasure.dirac(int(x)), mu_star.measure, kernel.space.metric_matrix)
    # W1 against a Dirac mass is the mean distance
    return float(np.mean(np.abs(np.asarray(mu_star.samples, dtype=float) - float(x))))

