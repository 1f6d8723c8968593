"""Martingale decomposition, asymptotic variance and moment checks.

Given the corrector, ``Z_n = chi(X_n) - chi(X_{n-1}) + psi(X_n)`` and
``S_n = Z_1 + ... + Z_n`` (``S_0 = 0``), so that
``S_n - W_n = chi(X_n) - chi(X_0)`` with ``W_n = psi(X_1) + ... + psi(X_n)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .corrector import (Corrector, StationaryMeasure, stationary_finite,
                        stationary_moments_affine)
from .errors import DegenerateVariance, ValidationError
from .kernels import (ArKernel, FiniteKernel, IfsKernel, Initial, Observable, Trajectory,
                      TransitionKernel, simulate_ensemble)
from .rng import stream
from .wasserstein import ContractionCertificate

DEGENERATE_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class MartingaleSeries:
    Z: np.ndarray
    S: np.ndarray
    W: np.ndarray
    source: str
    convention: str

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        n = np.arange(self.S.shape[0])
        z = np.concatenate([[0.0], self.Z])
        extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
        with open(path, "w") as fh:
            fh.write(f"# source={self.source} convention={self.convention.replace(' ', '')}"
                     f"{extra}\n")
            fh.write("n,Z_n,S_n,W_n\n")
            np.savetxt(fh, np.column_stack([n, z, self.S, self.W]),
                       fmt=["%d", "%.17g", "%.17g", "%.17g"], delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "MartingaleSeries":
        with open(path) as fh:
            first = fh.readline()
        meta = read_header(first)
        skip = 2 if first.startswith("#") else 1
        data = np.loadtxt(path, delimiter=",", skiprows=skip, ndmin=2)
        return cls(data[1:, 1], data[:, 2], data[:, 3], meta.get("source", ""),
                   meta.get("convention", ""))


def read_header(line: str) -> dict:
    """Parse a ``# key=value key=value`` CSV header line."""
    if not line.startswith("#"):
        return {}
    return dict(item.split("=", 1) for item in line[1:].split() if "=" in item)


def decompose(traj: Trajectory, chi: Corrector, psi: Optional[Observable] = None
              ) -> MartingaleSeries:
    if chi.kernel_hash != traj.kernel_hash:
        raise ValidationError("corrector was built for a different kernel")
    psi = chi.psi if psi is None else psi
    x = traj.states
    cv = chi.chi(x)
    pv = psi(x)
    z = cv[1:] - cv[:-1] + pv[1:]
    s = np.concatenate([[0.0], np.cumsum(z)])
    w = np.concatenate([[0.0], np.cumsum(pv[1:])])
    return MartingaleSeries(z, s, w, f"{traj.kernel_hash}:{traj.seed}", chi.convention)


def z_table(kernel: FiniteKernel, chi: Corrector) -> np.ndarray:
    """``Z(x -> y) = chi(y) - chi(x) + psi(y)`` for all state pairs."""
    states = np.arange(kernel.size)
    c = chi.chi(states)
    return c[None, :] - c[:, None] + chi.psi(states)[None, :]


def martingale_residual(kernel: FiniteKernel, chi: Corrector) -> np.ndarray:
    """Per-state conditional mean ``sum_y P(x, y) Z(x -> y)``; zero for a martingale."""
    return (kernel.matrix * z_table(kernel, chi)).sum(axis=1)


def ensemble_differences(kernel: TransitionKernel, chi: Corrector, initial, n: int,
                         replicas: int, seed: int, threads=None):
    """Martingale differences and psi-sums for an ensemble: arrays of shape ``(n, R)``."""
    x = simulate_ensemble(kernel, initial, n, replicas, seed, purpose="martingale",
                          threads=threads)
    c = chi.chi(x)
    p = chi.psi(x)
    return c[1:] - c[:-1] + p[1:], p[1:]


def iid_gaussian_differences(n: int, replicas: int, seed: int) -> np.ndarray:
    """Control channel: i.i.d. N(0, 1) differences, shape ``(n, replicas)``."""
    return stream(seed, "iid_control").standard_normal((n, replicas))


# --------------------------------------------------------------------------
# variance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VarianceEstimate:
    sigma2: float
    method: str
    se: float = 0.0
    n: int = 0
    s_curve: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    @property
    def degenerate(self) -> bool:
        return self.sigma2 < DEGENERATE_TOL

    def require_positive(self) -> float:
        if self.degenerate:
            raise DegenerateVariance(f"sigma^2 = {self.sigma2:.3g} ({self.method})")
        return self.sigma2

    def to_dict(self):
        d = {"sigma2": self.sigma2, "method": self.method, "se": self.se, "n": self.n,
             "degenerate": self.degenerate}
        if self.s_curve is not None and self.s_curve.size:
            sc = self.s_curve
            d["s_curve_summary"] = {"n": int(sc.size), "final": float(sc[-1]),
                                    "final_over_n": float(sc[-1] / sc.size)}
        d.update(self.meta)
        return d


def _stationary_sample(kernel, cert, n, seed, threads=None):
    """``(X_0, X_1)`` pairs with ``X_0`` (approximately) stationary."""
    if isinstance(kernel, FiniteKernel) or (isinstance(kernel, ArKernel)
                                           and kernel.noise == "normal"):
        x = simulate_ensemble(kernel, Initial("stationary", ()), 1, n, seed,
                              purpose="stationary_pairs", threads=threads)
        return x[0], x[1], 0
    gamma = cert.gamma if cert is not None else 0.5
    burn = max(1, math.ceil(math.log(1e-12) / math.log(gamma)))
    x = simulate_ensemble(kernel, Initial.dirac(kernel.space.x0), burn + 1, n, seed,
                          purpose="stationary_pairs", threads=threads)
    return x[burn], x[burn + 1], burn


def sigma2_corrector(kernel: TransitionKernel, chi: Corrector,
                     mu_star: Optional[StationaryMeasure] = None, mode: str = "exact",
                     samples: int = 1_000_000, seed: int = 0,
                     cert: Optional[ContractionCertificate] = None,
                     threads=None) -> VarianceEstimate:
    """``sigma^2 = E_{mu*} Z_1^2``.

    ``mode='exact'``: ``sum_x mu*(x) Var(Z_1 | X_0 = x)`` on finite chains,
    stationary moments for closed-form correctors. ``mode='mc'``: mean of
    ``Z_1^2`` over stationary starts.
    """
    if mode == "exact":
        if isinstance(kernel, FiniteKernel):
            mu_star = mu_star or stationary_finite(kernel)
            v = float(mu_star.weights @ chi.conditional_variance(np.arange(kernel.size)))
            return VarianceEstimate(max(v, 0.0), "corrector-exact")
        if chi.cond_var_poly is not None:
            m1, m2 = stationary_moments_affine(kernel)
            a, b, c = chi.cond_var_poly
            return VarianceEstimate(max(a * m2 + b * m1 + c, 0.0), "corrector-exact")
        raise ValidationError("exact sigma^2 needs a finite chain or a closed-form corrector")
    if mode != "mc":
        raise ValidationError(f"unknown mode {mode!r}")
    x0, x1, burn = _stationary_sample(kernel, cert, samples, seed, threads)
    z = chi.h(x1) - chi.chi(x0)
    z2 = z * z
    return VarianceEstimate(float(np.mean(z2)), "corrector-mc",
                            float(np.std(z2, ddof=1) / math.sqrt(samples)), samples,
                            meta={"burn_in": burn, "seed": seed})


def green_kubo_cutoff(cert: ContractionCertificate, tol: float) -> int:
    """Smallest lag ``K`` with ``c gamma^K / (1 - gamma) < tol``."""
    k = 1
    while cert.c * cert.gamma ** k / (1.0 - cert.gamma) >= tol:
        k += 1
    return k


def sigma2_green_kubo(kernel: TransitionKernel, psi: Observable,
                      mu_star: Optional[StationaryMeasure] = None,
                      lag_cutoff: Optional[int] = None,
                      cert: Optional[ContractionCertificate] = None, tol: float = 1e-15,
                      samples: Optional[np.ndarray] = None, batches: int = 20
                      ) -> VarianceEstimate:
    """``Var(psi) + 2 sum_{k=1}^{K} Cov(psi(X_0), psi(X_k))`` under ``mu*``.

    Exact on finite chains (powers of P) and on affine kernels with linear
    ``psi``; from the autocovariances of a stationary sample otherwise.
    """
    if lag_cutoff is None:
        if cert is None:
            raise ValidationError("need a certificate (or lag_cutoff) to choose the cutoff")
        lag_cutoff = green_kubo_cutoff(cert, tol)
    if samples is None and isinstance(kernel, FiniteKernel):
        mu = (mu_star or stationary_finite(kernel)).weights
        f = psi.values(kernel.size)
        total = float(mu @ (f * f))
        g = f.copy()
        for _ in range(lag_cutoff):
            g = kernel.matrix @ g
            total += 2.0 * float(mu @ (f * g))
        return VarianceEstimate(total, "green-kubo", meta={"lag_cutoff": lag_cutoff})
    if samples is None and isinstance(kernel, (IfsKernel, ArKernel)) and psi.linear is not None:
        m1, m2 = stationary_moments_affine(kernel)
        var = psi.linear[0] ** 2 * (m2 - m1 * m1)
        s = kernel.mean_slope
        total = var * (1.0 + 2.0 * sum(s ** k for k in range(1, lag_cutoff + 1)))
        return VarianceEstimate(total, "green-kubo", meta={"lag_cutoff": lag_cutoff})
    if samples is None:
        raise ValidationError("sample-based Green-Kubo needs a stationary sample")
    f = psi(np.asarray(samples))
    est = _gk_from_series(f, lag_cutoff)
    parts = np.array_split(f, batches)
    per = np.array([_gk_from_series(p, lag_cutoff) for p in parts])
    return VarianceEstimate(est, "green-kubo", float(np.std(per, ddof=1) / math.sqrt(batches)),
                            f.size, meta={"lag_cutoff": lag_cutoff})


def _gk_from_series(f: np.ndarray, k: int) -> float:
    n = f.size
    k = min(k, n - 1)
    size = 1 << int(math.ceil(math.log2(2 * n)))
    spec = np.fft.rfft(f, size)
    acov = np.fft.irfft(spec * np.conj(spec), size)[: k + 1] / n
    return float(acov[0] + 2.0 * acov[1:].sum())


@dataclass(frozen=True, eq=False)
class VarianceCurve:
    s2: np.ndarray
    s2_direct: np.ndarray
    ratio: np.ndarray
    sigma2: Optional[float]
    replicas: int

    @property
    def final_ratio(self) -> float:
        return float(self.ratio[-1])

    @property
    def relative_deviation(self) -> Optional[float]:
        if not self.sigma2:
            return None
        return abs(self.final_ratio - self.sigma2) / self.sigma2


def variance_curve(series, sigma2: Optional[float] = None) -> VarianceCurve:
    """Ensemble estimate of ``s_n^2 = E S_n^2``.

    ``series`` is a list of ``MartingaleSeries`` or a ``(n, R)`` array of
    differences. ``s2`` sums ensemble means of ``Z_k^2`` (unbiased by
    orthogonality of increments, and nondecreasing); ``s2_direct`` is the
    ensemble mean of ``S_n^2``.
    """
    if isinstance(series, np.ndarray):
        z = series
    else:
        z = np.column_stack([s.Z for s in series])
    if z.ndim != 2 or z.shape[1] < 2:
        raise ValidationError("need at least two replicas")
    s2 = np.cumsum(np.mean(z * z, axis=1))
    s = np.cumsum(z, axis=0)
    s2_direct = np.mean(s * s, axis=1)
    ratio = s2 / np.arange(1, z.shape[0] + 1)
    return VarianceCurve(s2, s2_direct, ratio, sigma2, z.shape[1])


# --------------------------------------------------------------------------
# moments
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class MomentReport:
    delta: float
    n_grid: list
    estimates: list
    standard_errors: list
    max_estimate: float
    trend_bounded: bool
    stationary_value: Optional[float] = None

    def to_dict(self):
        return dict(self.__dict__)


def _exact_stationary_moment(kernel, p):
    if isinstance(kernel, ArKernel) and kernel.noise == "normal" and kernel.space.x0 == 0:
        sd = kernel.scale / math.sqrt(1.0 - kernel.coef ** 2)
        return sd ** p * 2 ** (p / 2) * math.gamma((p + 1) / 2) / math.sqrt(math.pi)
    if isinstance(kernel, FiniteKernel):
        mu = stationary_finite(kernel).weights
        return float(mu @ kernel.space.metric_matrix[int(kernel.space.x0)] ** p)
    return None


def moment_check_H3(kernel: TransitionKernel, initial, delta: float, n_grid: Sequence[int],
                    replicas: int, seed: int, threads=None) -> MomentReport:
    """Monte Carlo ``E rho(x0, X_n)^(2 + delta)`` along ``n_grid``.

    The sequence counts as trend-bounded when no estimate exceeds twice the
    median by more than three standard errors.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    grid = sorted({int(n) for n in n_grid})
    x = simulate_ensemble(kernel, initial, grid[-1], replicas, seed, purpose="moment_h3",
                          threads=threads)
    p = 2.0 + delta
    est, ses = [], []
    for n in grid:
        v = np.asarray(kernel.space.dist(kernel.space.x0, x[n]), dtype=float) ** p
        est.append(float(v.mean()))
        ses.append(float(v.std(ddof=1) / math.sqrt(replicas)) if replicas > 1 else 0.0)
    med = float(np.median(est))
    bounded = all(e <= 2 * med + 3 * s for e, s in zip(est, ses))
    return MomentReport(delta, grid, est, ses, max(est), bounded,
                        _exact_stationary_moment(kernel, p))


def zsq_expectation_curve(kernel: FiniteKernel, chi: Corrector, initial, n_max: int
                          ) -> np.ndarray:
    """Exact ``E_{mu P^n} Z_1^2`` for ``n = 0..n_max``."""
    if isinstance(initial, str):
        initial = Initial.parse(initial)
    w = initial.weights(kernel)
    v = chi.conditional_variance(np.arange(kernel.size))
    out = np.empty(n_max + 1)
    for n in range(n_max + 1):
        out[n] = w @ v
        w = w @ kernel.matrix
    return out


def wlln_envelope(curve: np.ndarray, sigma2: float, cert: ContractionCertificate) -> float:
    """Smallest ``C`` with ``|curve[n] - sigma2| <= C gamma0^floor(n / n0)``."""
    n = np.arange(curve.size)
    scale = cert.gamma0 ** (n // cert.n0)
    return float(np.max(np.abs(curve - sigma2) / scale))


def z_moment_grid(kernel: FiniteKernel, chi: Corrector, initial, delta: float,
                  n_grid: Sequence[int]) -> list:
    """Exact ``E_mu |Z_n|^(2 + delta)`` on a finite chain for each ``n`` in the grid."""
    if isinstance(initial, str):
        initial = Initial.parse(initial)
    zt = np.abs(z_table(kernel, chi)) ** (2.0 + delta)
    w0 = initial.weights(kernel)
    out = []
    for n in n_grid:
        w = w0 @ np.linalg.matrix_power(kernel.matrix, int(n) - 1)
        out.append(float(w @ (kernel.matrix * zt).sum(axis=1)))
    return out
