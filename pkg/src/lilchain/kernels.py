"""State spaces, transition kernels, observables and trajectory simulation.

Every kernel consumes exactly one uniform draw per step and maps it through a
deterministic update ``x -> F(x, u)``. Sharing the uniforms between two
starting points is therefore a synchronous coupling, which the contraction
certificate relies on.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import special

from . import rng as rngmod
from ._backend import core
from .errors import DomainError, ValidationError

CHUNK = 1 << 18


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get("LILCHAIN_THREADS", "1"))
    return max(1, int(threads))


# --------------------------------------------------------------------------
# state space
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class StateSpace:
    """Metric state space: ``finite`` (indices), ``interval`` or ``line``.

    Finite spaces default to the discrete metric ``1[x != y]``; pass
    ``metric`` for anything else. Scalar spaces use ``|x - y|``.
    """

    kind: str
    size: Optional[int] = None
    low: float = -math.inf
    high: float = math.inf
    metric: Optional[np.ndarray] = None
    x0: float = 0

    def __post_init__(self):
        if self.kind not in ("finite", "interval", "line"):
            raise ValidationError(f"unknown state space kind {self.kind!r}")
        if self.kind == "finite":
            if self.size is None or self.size < 1:
                raise ValidationError("finite space needs size >= 1")
            if self.metric is not None:
                d = np.asarray(self.metric, dtype=float)
                check_metric(d)
                object.__setattr__(self, "metric", d)
        if self.kind == "interval" and not self.low < self.high:
            raise ValidationError("interval needs low < high")
        if not bool(np.all(self.contains(self.x0))):
            raise ValidationError(f"reference point {self.x0!r} is not a state")

    @classmethod
    def finite(cls, size, metric=None, x0=0):
        return cls("finite", size=int(size), metric=metric, x0=int(x0))

    @classmethod
    def interval(cls, low, high, x0=None):
        return cls("interval", low=float(low), high=float(high),
                   x0=float(low if x0 is None else x0))

    @classmethod
    def line(cls, x0=0.0):
        return cls("line", x0=float(x0))

    @property
    def metric_matrix(self) -> np.ndarray:
        if self.kind != "finite":
            raise ValidationError("metric matrix only exists for finite spaces")
        if self.metric is not None:
            return self.metric
        return 1.0 - np.eye(self.size)

    @property
    def diameter(self) -> float:
        if self.kind == "finite":
            return float(self.metric_matrix.max()) if self.size > 1 else 0.0
        return float(self.high - self.low)

    def contains(self, x):
        x = np.asarray(x)
        if self.kind == "finite":
            return (x == np.round(x)) & (x >= 0) & (x < self.size)
        return np.isfinite(x) & (x >= self.low) & (x <= self.high)

    def dist(self, x, y):
        if self.kind == "finite":
            xi = np.asarray(x, dtype=np.int64)
            yi = np.asarray(y, dtype=np.int64)
            if self.metric is None:
                return (xi != yi).astype(float)
            return self.metric[xi, yi]
        return np.abs(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))

    def sample_states(self, rng, size):
        """Draw probe states (uniform on finite/interval, wide box on a line)."""
        if self.kind == "finite":
            return rng.integers(0, self.size, size=size)
        if self.kind == "interval":
            return rng.uniform(self.low, self.high, size=size)
        return rng.uniform(self.x0 - 10.0, self.x0 + 10.0, size=size)

    def to_dict(self):
        d = {"kind": self.kind, "x0": self.x0}
        if self.kind == "finite":
            d["size"] = self.size
            if self.metric is not None:
                d["metric"] = self.metric.tolist()
        if self.kind == "interval":
            d.update(low=self.low, high=self.high)
        return d


def check_metric(d: np.ndarray, atol: float = 1e-12) -> None:
    """Raise ``ValidationError`` unless ``d`` is a metric matrix."""
    d = np.asarray(d, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValidationError("metric must be a square matrix")
    if np.any(d < -atol) or np.any(np.abs(np.diag(d)) > atol):
        raise ValidationError("metric must be non-negative with zero diagonal")
    if not np.allclose(d, d.T, atol=atol, rtol=0):
        raise ValidationError("metric is not symmetric")
    off = ~np.eye(d.shape[0], dtype=bool)
    if np.any(d[off] <= atol):
        raise ValidationError("metric must separate distinct states")
    # d[i,k] <= d[i,j] + d[j,k] for all triples
    if np.any(d[:, None, :] > d[:, :, None] + d[None, :, :] + atol):
        raise ValidationError("metric violates the triangle inequality")


# --------------------------------------------------------------------------
# kernels
# --------------------------------------------------------------------------


class TransitionKernel:
    """Base class: a samplable transition ``pi(x, .)`` on ``space``."""

    space: StateSpace
    kind = "abstract"
    state_dtype = np.float64

    def draw_inputs(self, rng: np.random.Generator, shape) -> np.ndarray:
        return rng.random(shape)

    def advance(self, x0: np.ndarray, inputs: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def expect_next(self, f: Callable, x, replicas: int = 4096, seed: int = 0) -> np.ndarray:
        """``Pf(x)`` for each state in ``x``."""
        raise NotImplementedError

    def spec(self) -> dict:
        raise NotImplementedError

    @property
    def hash(self) -> str:
        blob = json.dumps(self.spec(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def __repr__(self):
        return f"{type(self).__name__}({self.spec()})"


class FiniteKernel(TransitionKernel):
    kind = "finite"
    state_dtype = np.int64

    def __init__(self, matrix, metric=None, x0=0):
        p = np.array(matrix, dtype=float)
        if p.ndim != 2 or p.shape[0] != p.shape[1]:
            raise ValidationError("transition matrix must be square")
        if np.any(p < 0):
            raise ValidationError("transition matrix has negative entries")
        if np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-12):
            raise ValidationError("transition matrix rows must sum to 1")
        p.setflags(write=False)
        self.matrix = p
        self.space = StateSpace.finite(p.shape[0], metric=metric, x0=x0)
        cum = np.cumsum(p, axis=1)
        cum[:, -1] = 1.0
        self._cum = np.ascontiguousarray(cum)

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def advance(self, x0, inputs):
        x0 = np.ascontiguousarray(x0, dtype=np.int64)
        return core.advance_finite(self._cum, x0, np.ascontiguousarray(inputs))

    def apply(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        if f.shape[0] != self.size:
            raise ValidationError(f"expected {self.size} values, got {f.shape[0]}")
        return self.matrix @ f

    def power(self, n: int) -> np.ndarray:
        return np.linalg.matrix_power(self.matrix, n)

    def expect_next(self, f, x, replicas=4096, seed=0):
        vals = np.asarray(f(np.arange(self.size)), dtype=float)
        return self.apply(vals)[np.asarray(x, dtype=np.int64)]

    def spec(self):
        return {"type": "finite", "matrix": self.matrix.tolist(), "space": self.space.to_dict()}


class IfsKernel(TransitionKernel):
    """Iterated function system of affine maps ``x -> slope*x + intercept``."""

    kind = "ifs"

    def __init__(self, slopes, intercepts, probs, low=0.0, high=1.0, x0=None):
        self.slopes = np.array(slopes, dtype=float)
        self.intercepts = np.array(intercepts, dtype=float)
        self.probs = np.array(probs, dtype=float)
        k = self.slopes.shape[0]
        if self.intercepts.shape != (k,) or self.probs.shape != (k,) or k == 0:
            raise ValidationError("slopes, intercepts and probs must have equal nonzero length")
        if np.any(self.probs < 0) or abs(self.probs.sum() - 1.0) > 1e-12:
            raise ValidationError("map probabilities must be non-negative and sum to 1")
        if np.any(np.abs(self.slopes) >= 1):
            raise ValidationError("every map must be a strict contraction")
        self.space = StateSpace.interval(low, high, x0)
        ends = np.array([low, high])
        images = self.slopes[:, None] * ends[None, :] + self.intercepts[:, None]
        if np.any(images < low - 1e-12) or np.any(images > high + 1e-12):
            raise ValidationError("maps must send the interval into itself")
        cp = np.cumsum(self.probs)
        cp[-1] = 1.0
        self._cumprob = np.ascontiguousarray(cp)
        for a in (self.slopes, self.intercepts, self.probs):
            a.setflags(write=False)

    @property
    def contraction_ratios(self) -> np.ndarray:
        return np.abs(self.slopes)

    @property
    def mean_slope(self) -> float:
        return float(self.probs @ self.slopes)

    @property
    def mean_intercept(self) -> float:
        return float(self.probs @ self.intercepts)

    def advance(self, x0, inputs):
        x0 = np.ascontiguousarray(x0, dtype=np.float64)
        return core.advance_ifs(self._cumprob, np.ascontiguousarray(self.slopes),
                                np.ascontiguousarray(self.intercepts), x0,
                                np.ascontiguousarray(inputs))

    def expect_next(self, f, x, replicas=4096, seed=0):
        x = np.asarray(x, dtype=float)
        images = self.slopes[:, None] * x[None, ...].reshape(1, -1) + self.intercepts[:, None]
        return (self.probs[:, None] * f(images)).sum(axis=0).reshape(x.shape)

    def spec(self):
        return {"type": "ifs", "slopes": self.slopes.tolist(),
                "intercepts": self.intercepts.tolist(), "probs": self.probs.tolist(),
                "space": self.space.to_dict()}


_NOISES = ("normal", "uniform", "student_t")


class ArKernel(TransitionKernel):
    """Scalar autoregression ``X' = coef * X + noise``.

    Noise is drawn by inverse CDF from one uniform per step. Only laws with
    a finite ``(2 + delta)``-th moment are accepted.
    """

    kind = "ar"

    def __init__(self, coef, noise="normal", scale=1.0, df=None, delta=1.0, x0=0.0):
        self.coef = float(coef)
        if not abs(self.coef) < 1:
            raise ValidationError("AR coefficient must satisfy |coef| < 1")
        if noise not in _NOISES:
            raise ValidationError(f"noise must be one of {_NOISES}")
        if scale <= 0:
            raise ValidationError("noise scale must be positive")
        if delta <= 0:
            raise ValidationError("delta must be positive")
        if noise == "student_t":
            if df is None or df <= 2 + delta:
                raise ValidationError("student_t noise needs df > 2 + delta for (H3)")
        self.noise = noise
        self.scale = float(scale)
        self.df = None if df is None else float(df)
        self.delta = float(delta)
        self.space = StateSpace.line(x0)

    @property
    def mean_slope(self) -> float:
        return self.coef

    @property
    def mean_intercept(self) -> float:
        return 0.0

    @property
    def noise_variance(self) -> float:
        if self.noise == "normal":
            return self.scale ** 2
        if self.noise == "uniform":
            return self.scale ** 2 / 3.0
        return self.scale ** 2 * self.df / (self.df - 2.0)

    def noise_from_uniform(self, u):
        if self.noise == "normal":
            return self.scale * special.ndtri(u)
        if self.noise == "uniform":
            return self.scale * (2.0 * u - 1.0)
        return self.scale * special.stdtrit(self.df, u)

    def draw_inputs(self, rng, shape):
        # ndtri(0) = -inf; keep draws in the open interval
        u = rng.random(shape)
        u[u == 0.0] = np.nextafter(0.0, 1.0)
        return self.noise_from_uniform(u)

    def advance(self, x0, inputs):
        x0 = np.ascontiguousarray(x0, dtype=np.float64)
        return core.advance_ar(self.coef, x0, np.ascontiguousarray(inputs))

    def expect_next(self, f, x, replicas=4096, seed=0):
        x = np.asarray(x, dtype=float).reshape(-1)
        eps = self.draw_inputs(rngmod.stream(seed, "expect_next"), replicas)
        out = np.array([np.mean(f(self.coef * xi + eps)) for xi in x])
        return out

    def spec(self):
        return {"type": "ar", "coef": self.coef, "noise": self.noise, "scale": self.scale,
                "df": self.df, "delta": self.delta, "space": self.space.to_dict()}


# --------------------------------------------------------------------------
# initial distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Initial:
    """Initial-distribution descriptor: ``dirac``, ``uniform``, ``stationary``, ``weights``."""

    kind: str = "dirac"
    value: tuple = (0,)

    @classmethod
    def parse(cls, text: str) -> "Initial":
        head, _, rest = str(text).strip().partition(":")
        head = head.strip().lower()
        if head == "dirac":
            return cls("dirac", (float(rest),))
        if head in ("uniform", "stationary"):
            return cls(head, ())
        if head == "weights":
            return cls("weights", tuple(float(w) for w in rest.split(",")))
        raise ValidationError(f"unknown initial distribution {text!r}")

    @classmethod
    def dirac(cls, x):
        return cls("dirac", (float(x),))

    def describe(self) -> str:
        if self.kind == "dirac":
            v = self.value[0]
            return f"dirac:{int(v) if float(v).is_integer() else v!r}"
        if self.kind == "weights":
            return "weights:" + ",".join(repr(w) for w in self.value)
        return self.kind

    def weights(self, kernel: FiniteKernel) -> np.ndarray:
        """Exact law of ``X_0`` for a finite kernel."""
        m = kernel.size
        if self.kind == "dirac":
            w = np.zeros(m)
            x = self.value[0]
            if not kernel.space.contains(x):
                raise DomainError(f"state {x!r} outside the space")
            w[int(x)] = 1.0
            return w
        if self.kind == "uniform":
            return np.full(m, 1.0 / m)
        if self.kind == "weights":
            w = np.array(self.value, dtype=float)
            if w.shape != (m,) or np.any(w < 0) or abs(w.sum() - 1) > 1e-12:
                raise ValidationError("weights must be a probability vector over the states")
            return w
        from .corrector import stationary_finite

        return stationary_finite(kernel).weights

    def sample(self, kernel: TransitionKernel, rng: np.random.Generator, size: int) -> np.ndarray:
        space = kernel.space
        if isinstance(kernel, FiniteKernel):
            w = self.weights(kernel)
            if self.kind == "dirac":
                return np.full(size, int(self.value[0]), dtype=np.int64)
            cw = np.cumsum(w)
            cw[-1] = 1.0
            return np.searchsorted(cw, rng.random(size), side="right").astype(np.int64)
        if self.kind == "dirac":
            x = self.value[0]
            if not space.contains(x):
                raise DomainError(f"state {x!r} outside the space")
            return np.full(size, float(x))
        if self.kind == "uniform" and space.kind == "interval":
            return space.low + (space.high - space.low) * rng.random(size)
        if self.kind == "stationary" and isinstance(kernel, ArKernel) and kernel.noise == "normal":
            sd = kernel.scale / math.sqrt(1.0 - kernel.coef ** 2)
            u = rng.random(size)
            u[u == 0.0] = np.nextafter(0.0, 1.0)
            return sd * special.ndtri(u)
        raise ValidationError(
            f"initial distribution {self.describe()!r} unsupported for {kernel.kind} kernels")


# --------------------------------------------------------------------------
# simulation
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Trajectory:
    states: np.ndarray
    seed: int
    kernel_hash: str
    initial: str

    def __len__(self):
        return self.states.shape[0]

    @property
    def n(self) -> int:
        return self.states.shape[0] - 1

    def to_csv(self, path, meta: Optional[dict] = None) -> None:
        integer = self.states.dtype.kind == "i"
        extra = "".join(f" {k}={v}" for k, v in (meta or {}).items())
        with open(path, "w") as fh:
            fh.write(f"# seed={self.seed} kernel_hash={self.kernel_hash} "
                     f"initial={self.initial} dtype={'int' if integer else 'float'}{extra}\n")
            fh.write("step,state\n")
            cols = np.column_stack([np.arange(self.states.shape[0]), self.states])
            np.savetxt(fh, cols, fmt=["%d", "%d" if integer else "%.17g"], delimiter=",")

    @classmethod
    def from_csv(cls, path) -> "Trajectory":
        with open(path) as fh:
            header = fh.readline().lstrip("#").split()
        meta = dict(item.split("=", 1) for item in header)
        states = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)[:, 1]
        if meta.get("dtype") == "int":
            states = states.astype(np.int64)
        return cls(states, int(meta["seed"]), meta["kernel_hash"], meta.get("initial", ""))


def step(kernel: TransitionKernel, x, rng: np.random.Generator):
    """One transition from ``x``; consumes exactly one uniform draw."""
    if not bool(np.all(kernel.space.contains(x))):
        raise DomainError(f"state {x!r} is outside the state space")
    out = kernel.advance(np.array([x], dtype=kernel.state_dtype), kernel.draw_inputs(rng, (1, 1)))
    return out[0, 0].item()


def simulate(kernel: TransitionKernel, initial, n: int, seed: int) -> Trajectory:
    """Trajectory ``X_0..X_n``; bit-for-bit reproducible from ``(kernel, initial, n, seed)``."""
    if n < 0:
        raise ValueError("n must be non-negative")
    if isinstance(initial, str):
        initial = Initial.parse(initial)
    rng = rngmod.stream(seed, "trajectory")
    states = np.empty(n + 1, dtype=kernel.state_dtype)
    states[0] = initial.sample(kernel, rng, 1)[0]
    pos = 0
    while pos < n:
        k = min(CHUNK, n - pos)
        block = kernel.advance(states[pos:pos + 1], kernel.draw_inputs(rng, (k, 1)))
        states[pos + 1:pos + 1 + k] = block[:, 0]
        pos += k
    states.setflags(write=False)
    return Trajectory(states, seed, kernel.hash, initial.describe())


def simulate_ensemble(kernel: TransitionKernel, initial, n: int, replicas: int, seed: int,
                      purpose: str = "ensemble", threads: Optional[int] = None) -> np.ndarray:
    """``replicas`` independent paths as an array of shape ``(n + 1, replicas)``.

    Replicas are grouped in fixed blocks, each with its own keyed stream, so
    the output does not depend on ``threads``.
    """
    if isinstance(initial, str):
        initial = Initial.parse(initial)
    out = np.empty((n + 1, replicas), dtype=kernel.state_dtype)

    def run(block):
        b, start, stop = block
        rng = rngmod.stream(seed, purpose, b)
        x0 = initial.sample(kernel, rng, stop - start)
        out[0, start:stop] = x0
        if n:
            out[1:, start:stop] = kernel.advance(x0, kernel.draw_inputs(rng, (n, stop - start)))

    _run_blocks(run, list(rngmod.blocks(replicas)), threads)
    return out


def coupled_ensembles(kernel: TransitionKernel, starts: Sequence, n: int, replicas: int,
                      seed: int, purpose: str = "coupled",
                      threads: Optional[int] = None) -> list[np.ndarray]:
    """Synchronously coupled ensembles: every start reuses the same inputs."""
    outs = [np.empty((n + 1, replicas), dtype=kernel.state_dtype) for _ in starts]

    def run(block):
        b, start, stop = block
        inputs = kernel.draw_inputs(rngmod.stream(seed, purpose, b), (n, stop - start))
        for x, out in zip(starts, outs):
            x0 = np.full(stop - start, x, dtype=kernel.state_dtype)
            out[0, start:stop] = x0
            if n:
                out[1:, start:stop] = kernel.advance(x0, inputs)

    _run_blocks(run, list(rngmod.blocks(replicas)), threads)
    return outs


def _run_blocks(fn, blocks, threads):
    threads = resolve_threads(threads)
    if threads == 1 or len(blocks) == 1:
        for b in blocks:
            fn(b)
        return
    with ThreadPoolExecutor(max_workers=threads) as pool:
        list(pool.map(fn, blocks))


def apply_P(kernel: FiniteKernel, f) -> np.ndarray:
    """Exact ``(Pf)(x) = sum_y P(x, y) f(y)``."""
    return kernel.apply(f)


# --------------------------------------------------------------------------
# observables
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Observable:
    """Real Lipschitz function with a declared constant.

    ``offset`` is subtracted on evaluation; ``centered`` fills it in from a
    stationary measure. ``table`` (finite spaces) and ``linear``
    (``slope, intercept``) enable the exact code paths.
    """

    fn: Callable
    lipschitz: float
    offset: float = 0.0
    table: Optional[np.ndarray] = None
    linear: Optional[tuple] = None
    name: str = "psi"
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.lipschitz < 0 or not math.isfinite(self.lipschitz):
            raise ValidationError("Lipschitz constant must be finite and non-negative")

    def __call__(self, x):
        return np.asarray(self.fn(x), dtype=float) - self.offset

    @classmethod
    def from_table(cls, values, metric=None, name="psi"):
        v = np.array(values, dtype=float)
        v.setflags(write=False)
        d = (1.0 - np.eye(v.size)) if metric is None else np.asarray(metric, dtype=float)
        diff = np.abs(v[:, None] - v[None, :])
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(d > 0, diff / np.where(d > 0, d, 1.0), 0.0)
        lip = float(ratio.max()) if v.size > 1 else 0.0
        return cls(lambda x: v[np.asarray(x, dtype=np.int64)], lip, table=v, name=name)

    @classmethod
    def linear_fn(cls, slope, intercept=0.0, name="psi"):
        a, b = float(slope), float(intercept)
        return cls(lambda x: a * np.asarray(x, dtype=float) + b, abs(a), linear=(a, b), name=name)

    @classmethod
    def zero(cls):
        return cls(lambda x: np.zeros(np.shape(x)), 0.0, linear=(0.0, 0.0), name="zero")

    @property
    def is_zero(self) -> bool:
        if self.table is not None:
            return bool(np.all(self.table - self.offset == 0))
        return self.linear is not None and self.linear[0] == 0 and self.linear[1] == self.offset

    def values(self, size: int) -> np.ndarray:
        """Centered values on a finite space of ``size`` states."""
        return self(np.arange(size))

    def centered(self, mean: float) -> "Observable":
        """Copy with ``mean`` (the stationary expectation of ``self``) removed."""
        return Observable(self.fn, self.lipschitz, self.offset + float(mean), self.table,
                          self.linear, self.name, dict(self.meta))

    def spec(self) -> dict:
        d = {"name": self.name, "lipschitz": self.lipschitz, "offset": self.offset}
        if self.table is not None:
            d["table"] = self.table.tolist()
        if self.linear is not None:
            d["linear"] = list(self.linear)
        return d


def estimate_lipschitz(obs: Observable, space: StateSpace, probe_pairs: int, seed: int) -> float:
    """Largest observed ``|psi(x) - psi(y)| / rho(x, y)`` over random pairs."""
    if probe_pairs < 1:
        raise ValueError("probe_pairs must be >= 1")
    rng = rngmod.stream(seed, "lipschitz")
    x = space.sample_states(rng, probe_pairs)
    y = space.sample_states(rng, probe_pairs)
    d = np.asarray(space.dist(x, y), dtype=float)
    keep = d > 0
    if not np.any(keep):
        raise ValidationError("every probe pair had zero distance")
    diff = np.abs(obs(x[keep]) - obs(y[keep]))
    return float(np.max(diff / d[keep]))


def feller_check(kernel: TransitionKernel, f: Callable, lip_f: float, probe_pairs: int,
                 seed: int, replicas: int = 4096) -> float:
    """Max of ``|Pf(x) - Pf(y)| / (Lip(f) rho(x, y))`` over probe pairs.

    Values at most 1 show that P maps the test function to a continuous
    (indeed Lipschitz) function.
    """
    rng = rngmod.stream(seed, "feller")
    x = kernel.space.sample_states(rng, probe_pairs)
    y = kernel.space.sample_states(rng, probe_pairs)
    d = np.asarray(kernel.space.dist(x, y), dtype=float)
    keep = d > 0
    pfx = kernel.expect_next(f, x[keep], replicas=replicas, seed=seed)
    pfy = kernel.expect_next(f, y[keep], replicas=replicas, seed=seed)
    return float(np.max(np.abs(pfx - pfy) / (lip_f * d[keep])))
