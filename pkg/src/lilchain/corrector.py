"""Stationary measure and the corrector (solution of the Poisson equation).

Convention: the canonical corrector is ``chi = sum_{i>=1} P^i psi``, with
``h = chi + psi = sum_{i>=0} P^i psi``. Under this convention

    chi = P h,    h - P h = psi,    Z_n = h(X_n) - P h(X_{n-1}),

so ``Z_n = chi(X_n) - chi(X_{n-1}) + psi(X_n)`` has conditional mean zero.
Using the i>=0 series for ``chi`` in the same formula breaks that.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CenteringError, NonUniqueStationary, ValidationError
from .kernels import (ArKernel, FiniteKernel, IfsKernel, Initial, Observable, TransitionKernel,
                      simulate, simulate_ensemble)
from .wasserstein import ContractionCertificate, FiniteMeasure, dist_to_stationary

CANONICAL = "chi=sum_{i>=1} P^i psi"
LITERAL = "chi=sum_{i>=0} P^i psi"


@dataclass(frozen=True, eq=False)
class StationaryMeasure:
    measure: Optional[FiniteMeasure] = None
    samples: Optional[np.ndarray] = None
    provenance: str = "exact"
    meta: dict = field(default_factory=dict)

    @property
    def weights(self) -> np.ndarray:
        if self.measure is None:
            raise ValidationError("empirical sample has no weight vector")
        return self.measure.weights

    def mean(self, f: Callable) -> float:
        if self.measure is not None:
            return float(np.dot(self.measure.weights, f(self.measure.support)))
        return float(np.mean(f(self.samples)))


def stationary_finite(kernel: FiniteKernel) -> StationaryMeasure:
    """Solve ``mu P = mu``, ``sum(mu) = 1``."""
    p = kernel.matrix
    m = p.shape[0]
    a = p.T - np.eye(m)
    if np.linalg.matrix_rank(a, tol=1e-10) < m - 1:
        raise NonUniqueStationary("invariance equations have a multi-dimensional solution set")
    lhs = np.vstack([a, np.ones((1, m))])
    rhs = np.zeros(m + 1)
    rhs[-1] = 1.0
    mu = np.linalg.lstsq(lhs, rhs, rcond=None)[0]
    if np.any(mu < -1e-12):
        raise NonUniqueStationary("linear solve returned a signed measure")
    mu = np.clip(mu, 0.0, None)
    mu /= mu.sum()
    residual = float(np.abs(mu @ p - mu).sum())
    if residual > 1e-10:
        raise NonUniqueStationary(f"stationary residual {residual:.3g} too large")
    sm = FiniteMeasure(np.arange(m), mu)
    return StationaryMeasure(measure=sm, provenance="exact", meta={"residual": residual})


def stationary_empirical(kernel: TransitionKernel, burn_in: int, n: int, seed: int,
                         initial=None) -> StationaryMeasure:
    """Empirical law of ``X_burn_in .. X_{burn_in + n}``."""
    if initial is None:
        initial = Initial.dirac(kernel.space.x0)
    traj = simulate(kernel, initial, burn_in + n, seed)
    xs = np.asarray(traj.states[burn_in:])
    meta = {"burn_in": burn_in, "n": n, "seed": seed}
    if isinstance(kernel, FiniteKernel):
        w = np.bincount(xs, minlength=kernel.size) / xs.size
        return StationaryMeasure(measure=FiniteMeasure.from_vector(w), samples=xs,
                                 provenance="empirical", meta=meta)
    return StationaryMeasure(samples=xs, provenance="empirical", meta=meta)


def stationary_mean_affine(kernel) -> float:
    """Stationary mean of an affine IFS or AR kernel."""
    return kernel.mean_intercept / (1.0 - kernel.mean_slope)


def stationary_moments_affine(kernel) -> tuple[float, float]:
    """First two stationary moments of an affine IFS or AR kernel."""
    m1 = stationary_mean_affine(kernel)
    if isinstance(kernel, ArKernel):
        return m1, kernel.noise_variance / (1.0 - kernel.coef ** 2) + m1 * m1
    p, s, b = kernel.probs, kernel.slopes, kernel.intercepts
    m2 = (2.0 * m1 * float(p @ (s * b)) + float(p @ (b * b))) / (1.0 - float(p @ (s * s)))
    return m1, m2


# --------------------------------------------------------------------------
# corrector
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Corrector:
    """Corrector ``chi`` together with ``h = chi + psi``.

    ``kind`` is ``table`` (finite chains), ``closed-form`` (linear
    observables on affine kernels).
    """

    kind: str
    psi: Observable
    kernel_hash: str
    chi_fn: Callable
    h_fn: Callable
    cond_var_fn: Callable
    convention: str = CANONICAL
    lipschitz_bound: Optional[float] = None
    chi_table: Optional[np.ndarray] = None
    h_table: Optional[np.ndarray] = None
    residual: float = 0.0
    mean: float = 0.0
    # conditional variance as a*x^2 + b*x + c (closed-form correctors)
    cond_var_poly: Optional[tuple] = None
    # sup chi - inf chi when known in closed form (bounded state spaces)
    chi_oscillation: Optional[float] = None

    def chi(self, x) -> np.ndarray:
        return self.chi_fn(x)

    def h(self, x) -> np.ndarray:
        return self.h_fn(x)

    def conditional_variance(self, x) -> np.ndarray:
        """``Var(Z_1 | X_0 = x) = P(h^2)(x) - (Ph(x))^2``."""
        return self.cond_var_fn(x)

    @property
    def oscillation(self) -> float:
        if self.chi_table is not None:
            return float(self.chi_table.max() - self.chi_table.min())
        if self.chi_oscillation is not None:
            return self.chi_oscillation
        return math.inf

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        if self.chi_table is None:
            raise ValidationError("only table correctors export as CSV")
        extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
        with open(path, "w") as fh:
            fh.write(f"# kernel_hash={self.kernel_hash} "
                     f"convention={self.convention.replace(' ', '')}{extra}\n")
            fh.write("state,chi,h\n")
            for i, (c, h) in enumerate(zip(self.chi_table, self.h_table)):
                fh.write(f"{i},{float(c)!r},{float(h)!r}\n")


def _lip_bound(psi: Observable, cert: Optional[ContractionCertificate]):
    if cert is None:
        return None
    return psi.lipschitz * cert.c * cert.gamma / (1.0 - cert.gamma)


def corrector_finite(kernel: FiniteKernel, psi: Observable, mu_star: StationaryMeasure,
                     cert: Optional[ContractionCertificate] = None,
                     convention: str = CANONICAL) -> Corrector:
    """Exact corrector on a finite chain.

    Solves ``(I - P + 1 mu*^T) h = psi``, which pins ``<h, mu*> = 0``.
    ``convention=LITERAL`` stores ``chi = h`` instead (used to demonstrate
    why the i>=0 reading is not a martingale corrector).
    """
    m = kernel.size
    mu = mu_star.weights
    psi_v = psi.values(m)
    centre = float(mu @ psi_v)
    if abs(centre) > 1e-10:
        raise CenteringError(f"<psi, mu*> = {centre:.3g}; center the observable first")
    p = kernel.matrix
    a = np.eye(m) - p + np.outer(np.ones(m), mu)
    try:
        h = np.linalg.solve(a, psi_v)
    except np.linalg.LinAlgError as exc:
        raise NonUniqueStationary("fundamental matrix is singular") from exc
    chi = p @ h
    residual = float(max(np.abs(chi - (h - psi_v)).max(), abs(mu @ chi)))
    if convention == LITERAL:
        chi = h.copy()
    elif convention != CANONICAL:
        raise ValidationError(f"unknown convention {convention!r}")
    ph2 = p @ (h * h)
    cond_var = ph2 - (p @ h) ** 2
    for arr in (chi, h, cond_var):
        arr.setflags(write=False)

    def table(v):
        return lambda x: v[np.asarray(x, dtype=np.int64)]

    return Corrector("table", psi, kernel.hash, table(chi), table(h), table(cond_var),
                     convention, _lip_bound(psi, cert), chi, h, residual, float(mu @ chi))


def corrector_affine(kernel, psi: Observable,
                     cert: Optional[ContractionCertificate] = None) -> Corrector:
    """Closed-form corrector for a linear observable on an affine kernel.

    On affine kernels ``P`` maps ``x - m*`` to ``s (x - m*)`` with ``s`` the
    mean slope, so ``P^i psi = s^i psi`` and ``h = psi / (1 - s)``.
    """
    if not isinstance(kernel, (IfsKernel, ArKernel)) or psi.linear is None:
        raise ValidationError("closed form needs a linear observable on an IFS/AR kernel")
    s = kernel.mean_slope
    m_star = stationary_mean_affine(kernel)
    centre = float(psi(m_star))
    if abs(centre) > 1e-10:
        raise CenteringError(f"<psi, mu*> = {centre:.3g}; center the observable first")
    alpha = psi.linear[0]
    k = alpha / (1.0 - s)

    def h_fn(x):
        return psi(x) / (1.0 - s)

    def chi_fn(x):
        return s * psi(x) / (1.0 - s)

    if isinstance(kernel, ArKernel):
        nv = kernel.noise_variance

        poly = (0.0, 0.0, k * k * nv)
    else:
        p, sl, b = kernel.probs, kernel.slopes, kernel.intercepts
        qa = float(p @ (sl * sl)) - s * s
        qb = 2.0 * (float(p @ (sl * b)) - s * kernel.mean_intercept)
        qc = float(p @ (b * b)) - kernel.mean_intercept ** 2

        poly = (k * k * qa, k * k * qb, k * k * qc)

    def cond_var(x):
        x = np.asarray(x, dtype=float)
        return poly[0] * x * x + poly[1] * x + poly[2]

    osc = None
    if kernel.space.kind == "interval":
        osc = abs(s * alpha / (1.0 - s)) * (kernel.space.high - kernel.space.low)
    return Corrector("closed-form", psi, kernel.hash, chi_fn, h_fn, cond_var, CANONICAL,
                     _lip_bound(psi, cert), cond_var_poly=poly, chi_oscillation=osc)


def build_corrector(kernel, psi, mu_star=None, cert=None) -> Corrector:
    if isinstance(kernel, FiniteKernel):
        return corrector_finite(kernel, psi, mu_star or stationary_finite(kernel), cert)
    return corrector_affine(kernel, psi, cert)


@dataclass(frozen=True)
class McCorrectorEstimate:
    """Monte Carlo value of ``h(x) = sum_{i>=0} P^i psi(x)`` truncated at ``N``."""

    x: float
    estimate: float
    error_bound: float
    N: int
    R: int
    seed: int
    standard_error: float
    truncation_bound: float
    psi_x: float

    @property
    def chi(self) -> float:
        return self.estimate - self.psi_x

    def to_json(self, **kw) -> str:
        return json.dumps({"x": self.x, "estimate": self.estimate,
                           "error_bound": self.error_bound, "N": self.N, "R": self.R,
                           "seed": self.seed}, **kw)


def default_truncation(lipschitz: float, cert: ContractionCertificate, diameter: float,
                       tol: float) -> int:
    """Smallest ``N`` with ``L c gamma^(N+1) / (1 - gamma) * diameter < tol / 2``."""
    g = cert.gamma
    n = 1
    while lipschitz * cert.c * g ** (n + 1) / (1.0 - g) * diameter >= tol / 2.0:
        n += 1
    return n


def corrector_mc(kernel: TransitionKernel, psi: Observable, x, truncation: int, replicas: int,
                 seed: int, cert: Optional[ContractionCertificate] = None,
                 mu_star: Optional[StationaryMeasure] = None, override: bool = False,
                 threads=None) -> McCorrectorEstimate:
    """Estimate ``h(x)`` by averaging ``sum_{i<=N} psi(X_i)`` over replicas started at ``x``.

    The error bound is the geometric tail ``L c gamma^(N+1) / (1 - gamma) *
    d(delta_x, mu*)`` plus three standard errors.
    """
    if truncation < 1 or replicas < 1:
        raise ValueError("truncation and replicas must be >= 1")
    if cert is None and not override:
        raise ValidationError("corrector_mc needs a contraction certificate (or override=True)")
    paths = simulate_ensemble(kernel, Initial.dirac(x), truncation, replicas, seed,
                              purpose="corrector_mc", threads=threads)
    sums = psi(paths).sum(axis=0)
    est = float(np.mean(sums))
    se = float(np.std(sums, ddof=1) / math.sqrt(replicas)) if replicas > 1 else math.inf
    if cert is None:
        tail = math.inf
    else:
        if mu_star is None:
            if isinstance(kernel, FiniteKernel):
                mu_star = stationary_finite(kernel)
            else:
                burn = max(1, math.ceil(math.log(1e-12) / math.log(cert.gamma)))
                mu_star = stationary_empirical(kernel, burn, 20_000, seed)
        d = dist_to_stationary(kernel, x, mu_star)
        g = cert.gamma
        tail = psi.lipschitz * cert.c * g ** (truncation + 1) / (1.0 - g) * d
    return McCorrectorEstimate(float(x), est, tail + 3.0 * se, truncation, replicas, seed, se,
                               tail, float(psi(np.array([x]))[0]))
