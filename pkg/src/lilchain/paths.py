"""Rescaled polygonal paths and their distance to the Strassen ball.

``K`` is the set of absolutely continuous ``x`` on ``[0, 1]`` with
``x(0) = 0`` and ``int_0^1 x'(t)^2 dt <= 1``. Distances are in the sup norm.

``dist_to_K`` bisects on ``eps``. For a fixed ``eps`` the question "is there
an ``x`` in ``K`` within ``eps`` of ``p``?" reduces to the corridor
``[p(t_i) - eps, p(t_i) + eps]`` at the breakpoints of ``p`` (between
breakpoints both ``p`` and the optimal ``x`` are linear). The taut string
through the corridor minimizes every convex energy simultaneously, so the
corridor is feasible iff its taut string has energy at most 1. The free
right end is handled by reflecting the corridor onto ``[0, 2]`` and pinning
both ends to 0; the minimizer is symmetric and its energy on ``[0, 1]`` is
half the total.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from ._backend import core
from .errors import DegenerateVariance, ValidationError

#: K-maxima of the endpoint, supremum and integral functionals
K_TARGETS = {"endpoint": 1.0, "sup": 1.0, "integral": 1.0 / math.sqrt(3.0)}
FUNCTIONALS = ("endpoint", "sup", "integral")


@dataclass(frozen=True, eq=False)
class PolygonalPath:
    """Piecewise-linear ``x`` on ``[0, 1]`` with ``x(0) = 0``."""

    t: np.ndarray
    v: np.ndarray
    n: int = 0
    variant: str = ""

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        v = np.asarray(self.v, dtype=float)
        if t.ndim != 1 or t.shape != v.shape or t.size < 2:
            raise ValidationError("breakpoints and values must be equal-length 1-D arrays")
        if t[0] != 0.0 or t[-1] != 1.0:
            raise ValidationError("breakpoints must run from 0 to 1")
        if v[0] != 0.0:
            raise ValidationError("paths are pinned at x(0) = 0")
        if np.any(np.diff(t) <= 0):
            raise ValidationError("breakpoints must be strictly increasing")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "v", v)

    @classmethod
    def zero(cls, n: int = 0, variant: str = "") -> "PolygonalPath":
        return cls(np.array([0.0, 1.0]), np.zeros(2), n, variant)

    @classmethod
    def from_function(cls, f, m: int = 1) -> "PolygonalPath":
        t = np.linspace(0.0, 1.0, m + 1)
        return cls(t, np.asarray(f(t), dtype=float))

    def __call__(self, s):
        return np.interp(s, self.t, self.v)

    def scaled(self, lam: float) -> "PolygonalPath":
        return PolygonalPath(self.t, lam * self.v, self.n, self.variant)

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
        with open(path, "w") as fh:
            fh.write(f"# n={self.n} variant={self.variant}{extra}\n")
            fh.write("t,value\n")
            np.savetxt(fh, np.column_stack([self.t, self.v]), fmt="%.17g", delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "PolygonalPath":
        with open(path) as fh:
            header = dict(item.split("=", 1) for item in fh.readline().lstrip("#").split())
        data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
        return cls(data[:, 0], data[:, 1], int(header.get("n", 0)), header.get("variant", ""))


def _loglog(x: float) -> float:
    return math.log(math.log(x))


def lil_scale(n: float) -> float:
    """``sqrt(2 n log log n)``; requires ``n > e``."""
    return math.sqrt(2.0 * n * _loglog(n))


def build_theta(W, sigma: float, n: int) -> PolygonalPath:
    """Natural-time path: vertex ``(k/n, W_k / (sigma sqrt(2 n log log n)))``.

    ``W`` holds ``W_0 = 0, W_1, ..., W_m`` with ``m >= n``. Zero path for
    ``n <= e``.
    """
    if not sigma > 0:
        raise DegenerateVariance(f"sigma = {sigma!r} must be positive")
    W = np.asarray(W, dtype=float)
    if W.size < n + 1:
        raise ValidationError(f"need W_0..W_{n}, got {W.size} values")
    if n <= math.e:
        return PolygonalPath.zero(n, "theta")
    v = W[: n + 1] / (sigma * lil_scale(n))
    v[0] = 0.0
    return PolygonalPath(np.arange(n + 1) / n, v, n, "theta")


def theta_from_increments(psi_values, sigma: float, n: int) -> PolygonalPath:
    """``build_theta`` from per-step values ``psi(X_1), ..., psi(X_m)``."""
    w = np.concatenate([[0.0], np.cumsum(np.asarray(psi_values, dtype=float))])
    return build_theta(w, sigma, n)


def variance_time_index(s2, s: float) -> int:
    """``g(s) = sup{n : s_n^2 <= s}`` for a nondecreasing ``s2`` indexed from 1."""
    return int(np.searchsorted(np.asarray(s2, dtype=float), s, side="right"))


def build_eta(Z, s2, n: int, variant: str = "variance-time",
              sigma: Optional[float] = None) -> PolygonalPath:
    """Variance-time path: vertex ``(s_k^2 / s_n^2, S_k / denom)``.

    ``Z`` and ``s2`` are indexed from ``k = 1``. ``denom`` is
    ``sqrt(2 s_n^2 log log s_n^2)`` (``variance-time``) or
    ``sigma sqrt(2 n log log n)`` (``sigma-n``). Zero path for
    ``n <= g(e)`` (variance time) or ``n <= e`` (``sigma-n``), matching
    the range where the normalizer is undefined.
    """
    Z = np.asarray(Z, dtype=float)[:n]
    s2 = np.asarray(s2, dtype=float)[:n]
    if Z.size < n or s2.size < n:
        raise ValidationError(f"need {n} differences and variances")
    if s2[0] <= 0 or np.any(np.diff(s2) <= 0):
        raise ValidationError("s2 must be positive and strictly increasing")
    if variant == "variance-time":
        if n <= variance_time_index(s2, math.e):
            return PolygonalPath.zero(n, variant)
        denom = lil_scale(s2[-1])
    elif variant == "sigma-n":
        if sigma is None or not sigma > 0:
            raise DegenerateVariance("sigma-n variant needs a positive sigma")
        if n <= math.e:
            return PolygonalPath.zero(n, variant)
        denom = sigma * lil_scale(n)
    else:
        raise ValidationError(f"unknown variant {variant!r}")
    t = np.concatenate([[0.0], s2 / s2[-1]])
    t[-1] = 1.0
    v = np.concatenate([[0.0], np.cumsum(Z)]) / denom
    return PolygonalPath(t, v, n, variant)


# --------------------------------------------------------------------------
# functionals
# --------------------------------------------------------------------------


def path_energy(p: PolygonalPath) -> float:
    """``int_0^1 x'(t)^2 dt``; ``p`` lies in K iff this is at most 1."""
    dv = np.diff(p.v)
    return float(np.sum(dv * dv / np.diff(p.t)))


def functional_eval(p: PolygonalPath, which: str) -> float:
    if which == "endpoint":
        return float(p.v[-1])
    if which == "sup":
        return float(p.v.max())
    if which == "integral":
        return float(np.sum(np.diff(p.t) * (p.v[1:] + p.v[:-1])) / 2.0)
    raise ValidationError(f"unknown functional {which!r}")


def sup_distance(p: PolygonalPath, q: PolygonalPath) -> float:
    """Sup-norm distance, attained on the merged breakpoint grid."""
    grid = np.union1d(p.t, q.t)
    return float(np.max(np.abs(p(grid) - q(grid))))


# --------------------------------------------------------------------------
# projection onto K
# --------------------------------------------------------------------------


def corridor_projection(p: PolygonalPath, eps: float) -> tuple[PolygonalPath, float]:
    """Minimal-energy path within ``eps`` of ``p`` at every breakpoint, and its energy."""
    t, v = p.t, p.v
    lo = v - eps
    hi = v + eps
    lo[0] = hi[0] = 0.0
    # reflect onto [0, 2]; the shared gate at t = 1 appears once
    rt = np.concatenate([t, 2.0 - t[-2::-1]])
    rlo = np.concatenate([lo, lo[-2::-1]])
    rhi = np.concatenate([hi, hi[-2::-1]])
    pt, pv = core.taut_string(rt, rlo, rhi)
    energy = float(np.sum(np.diff(pv) ** 2 / np.diff(pt))) / 2.0
    x = np.interp(t, pt, pv)
    return PolygonalPath(t, x, p.n, "projection"), energy


def project_to_K(p: PolygonalPath, eps: float) -> Optional[PolygonalPath]:
    """A path in K within ``eps`` of ``p``, or ``None`` if none exists."""
    x, energy = corridor_projection(p, eps)
    return x if energy <= 1.0 else None


def coarsen(p: PolygonalPath, max_points: int) -> tuple[PolygonalPath, float]:
    """Keep block-wise extreme vertices; return the coarse path and its sup distance to ``p``."""
    m = p.t.size
    if m <= max_points:
        return p, 0.0
    nblocks = max(1, (max_points - 2) // 2)
    edges = np.linspace(1, m - 1, nblocks + 1).astype(np.int64)
    keep = [0, m - 1]
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        seg = p.v[a:b]
        keep.append(a + int(np.argmin(seg)))
        keep.append(a + int(np.argmax(seg)))
    idx = np.unique(np.asarray(keep))
    q = PolygonalPath(p.t[idx], p.v[idx], p.n, p.variant)
    return q, float(np.max(np.abs(q(p.t) - p.v)))


def dist_to_K(p: PolygonalPath, tol: float = 1e-9, max_points: int = 1 << 16) -> float:
    """``min_{x in K} sup_t |p(t) - x(t)|`` within ``tol`` (an upper estimate).

    Paths with more than ``max_points`` breakpoints are first coarsened; the
    coarsening error is added, so the result stays an upper bound.
    """
    if not tol > 0:
        raise ValidationError("tol must be positive")
    energy = path_energy(p)
    if energy <= 1.0:
        return 0.0
    q, err = coarsen(p, max_points)
    # any x in K has |x(t)| <= sqrt(t); p / sqrt(E) lies in K
    lo = max(0.0, float(np.max(np.abs(q.v) - np.sqrt(q.t))))
    hi = float(np.max(np.abs(q.v))) * (1.0 - 1.0 / math.sqrt(path_energy(q)))
    hi = max(hi, lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if corridor_projection(q, mid)[1] <= 1.0:
            hi = mid
        else:
            lo = mid
    return hi + err


# --------------------------------------------------------------------------
# LIL statistics
# --------------------------------------------------------------------------


def geometric_subsequence(n_max: int, ratio: float = 1.5, start: int = 16) -> list:
    """``ceil(start * ratio^j)`` for ``j = 0, 1, ...`` up to ``n_max`` (deduplicated)."""
    if ratio <= 1:
        raise ValidationError("ratio must exceed 1")
    out, j = [], 0
    while True:
        n = math.ceil(start * ratio ** j - 1e-9)
        if n > n_max:
            return out
        if not out or n > out[-1]:
            out.append(n)
        j += 1


def dyadic_subsequence(n_max: int, start: int = 16) -> list:
    return geometric_subsequence(n_max, 2.0, start)


def parse_subsequence(rule: str, n_max: int, start: int = 16) -> list:
    """``geometric:<ratio>`` or ``dyadic``."""
    head, _, arg = rule.partition(":")
    if head == "geometric":
        return geometric_subsequence(n_max, float(arg or 1.5), start)
    if head == "dyadic":
        return dyadic_subsequence(n_max, start)
    raise ValidationError(f"unknown subsequence rule {rule!r}")


def lil_ratio(W, sigma: float, n_min: int = 16) -> np.ndarray:
    """``|W_n| / (sigma sqrt(2 n log log n))`` for ``n = n_min..len(W)-1``."""
    W = np.asarray(W, dtype=float)
    n = np.arange(n_min, W.size, dtype=float)
    return np.abs(W[n_min:]) / (sigma * np.sqrt(2.0 * n * np.log(np.log(n))))


def lil_running_max(W, sigma: float, n_min: int, n_max: Optional[int] = None) -> float:
    """``max_{n_min <= n <= n_max} |W_n| / (sigma sqrt(2 n log log n))``."""
    W = np.asarray(W, dtype=float)
    if n_max is not None:
        W = W[: n_max + 1]
    return float(np.max(lil_ratio(W, sigma, n_min)))


@dataclass
class StrassenReport:
    n_list: list = field(default_factory=list)
    functionals: dict = field(default_factory=lambda: {k: [] for k in FUNCTIONALS})
    running_max: dict = field(default_factory=lambda: {k: [] for k in FUNCTIONALS})
    energy: list = field(default_factory=list)
    dist_to_K_series: list = field(default_factory=list)
    targets: dict = field(default_factory=lambda: dict(K_TARGETS))
    window: int = 10
    meta: dict = field(default_factory=dict)

    def add(self, n: int, p: PolygonalPath, tol: float, max_points: int) -> None:
        if self.n_list and n <= self.n_list[-1]:
            raise ValidationError("subsequence indices must be strictly increasing")
        self.n_list.append(int(n))
        for k in FUNCTIONALS:
            val = functional_eval(p, k)
            self.functionals[k].append(val)
            prev = self.running_max[k][-1] if self.running_max[k] else -math.inf
            self.running_max[k].append(max(prev, val))
        self.energy.append(path_energy(p))
        self.dist_to_K_series.append(dist_to_K(p, tol, max_points))

    def final_max(self, which: str) -> float:
        return self.running_max[which][-1]

    def max_over(self, which: str, n_min: int) -> float:
        """Max of a functional over subsequence points with ``n >= n_min``."""
        vals = [v for n, v in zip(self.n_list, self.functionals[which]) if n >= n_min]
        return max(vals) if vals else math.nan

    @property
    def recent_min_dist(self) -> float:
        return min(self.dist_to_K_series[-self.window:])

    def to_dict(self) -> dict:
        return {"n_list": self.n_list, "functionals": self.functionals,
                "running_max": self.running_max, "energy": self.energy,
                "dist_to_K_series": self.dist_to_K_series, "targets": self.targets,
                "window": self.window, "recent_min_dist_to_K": self.recent_min_dist,
                **self.meta}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def cluster_tracker(paths: Iterable, targets: Optional[dict] = None, window: int = 10,
                    tol: float = 1e-6, max_points: int = 1 << 14) -> StrassenReport:
    """Fold ``(n, path)`` pairs (or bare paths, keyed by ``path.n``) into a report."""
    report = StrassenReport(targets=dict(targets or K_TARGETS), window=window)
    for item in paths:
        n, p = item if isinstance(item, tuple) else (item.n, item)
        report.add(n, p, tol, max_points)
    if not report.n_list:
        raise ValidationError("empty path stream")
    return report


def theta_stream(W, sigma: float, n_list: Sequence[int]):
    """Lazily build ``theta_n`` along a subsequence."""
    for n in n_list:
        yield n, build_theta(W, sigma, n)
