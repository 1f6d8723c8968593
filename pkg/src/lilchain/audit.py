"""Checks of the martingale LIL hypotheses on simulated or exact data.

Every check returns a ``ConditionReport`` with verdict ``pass``, ``fail``
or ``inconclusive``. ``inconclusive`` means the sampling error is too large
to decide, which is distinct from evidence against the condition.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import special

from .corrector import Corrector
from .errors import DegenerateVariance, ValidationError
from .kernels import FiniteKernel, Initial, Observable, TransitionKernel, simulate_ensemble
from .martingale import MomentReport, z_table
from .wasserstein import ContractionCertificate

PASS, FAIL, INCONCLUSIVE = "pass", "fail", "inconclusive"


@dataclass
class ConditionReport:
    id: str
    verdict: str
    params: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.verdict == PASS

    def to_dict(self) -> dict:
        return {"id": self.id, "params": self.params, "diagnostics": self.diagnostics,
                "summary": self.summary, "verdict": self.verdict, "notes": self.notes}

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def combine_verdicts(verdicts: Sequence[str]) -> str:
    verdicts = list(verdicts)
    if FAIL in verdicts:
        return FAIL
    if INCONCLUSIVE in verdicts:
        return INCONCLUSIVE
    return PASS


def exit_code(reports) -> int:
    """0 if everything passed, 2 on any failure, 3 if only inconclusive results remain."""
    v = combine_verdicts(r.verdict for r in reports)
    return {PASS: 0, FAIL: 2, INCONCLUSIVE: 3}[v]


def checkpoints(n: int, start: int = 100, ratio: float = 2.0) -> list:
    """Geometric checkpoints ``start, start*ratio, ...`` ending exactly at ``n``."""
    out = []
    c = float(start)
    while c < n:
        out.append(int(c))
        c *= ratio
    out.append(int(n))
    return out


# --------------------------------------------------------------------------
# (e1), (e2)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ZLaw:
    """Law of ``Z_1..Z_N`` as weighted atoms: ``values`` and ``weights`` of shape ``(N, K)``.

    Exact laws (finite chains) carry transition atoms; ensembles carry one
    atom per replica with weight ``1/R`` and allow standard errors.
    """

    values: np.ndarray
    weights: np.ndarray
    replicas: Optional[int] = None

    @property
    def N(self) -> int:
        return max(self.weights.shape[0], self.values.shape[0])

    @classmethod
    def from_ensemble(cls, z) -> "ZLaw":
        z = np.asarray(z, dtype=float)
        if z.ndim != 2:
            raise ValidationError("ensemble must have shape (n, replicas)")
        r = z.shape[1]
        return cls(z, np.full((1, r), 1.0 / r), r)

    @classmethod
    def exact_finite(cls, kernel: FiniteKernel, chi: Corrector, initial, n: int) -> "ZLaw":
        """Exact law of ``Z_k = Z(X_{k-1} -> X_k)`` for ``k = 1..n``."""
        if isinstance(initial, str):
            initial = Initial.parse(initial)
        vals = z_table(kernel, chi).ravel()
        w = initial.weights(kernel)
        out = np.empty((n, vals.size))
        for k in range(n):
            out[k] = (w[:, None] * kernel.matrix).ravel()
            w = w @ kernel.matrix
        return cls(vals[None, :], out)

    def expect(self, f) -> np.ndarray:
        """``E f(Z_k)`` for each ``k``; ``f`` receives ``(values, k-index column)``."""
        n = np.arange(self.N)[:, None]
        k = max(self.values.shape[1], self.weights.shape[1])
        vals = np.broadcast_to(self.values, (self.N, k))
        return np.sum(self.weights * f(vals, n), axis=1)

    def per_replica_sums(self, f) -> Optional[np.ndarray]:
        if self.replicas is None:
            return None
        n = np.arange(self.N)[:, None]
        return np.sum(f(self.values, n), axis=0)


def _moment_sup(law: ZLaw, p: float) -> float:
    """``sup_n E|Z_n|^p`` estimated as the max of pooled means over dyadic windows."""
    m = law.expect(lambda z, n: np.abs(z) ** p)
    best, a = 0.0, 0
    while a < m.size:
        b = min(m.size, max(1, 2 * a))
        best = max(best, float(np.mean(m[a:b])))
        a = b
    return best


def _series_report(cid, terms, partial, se, tail, law, params, extra) -> ConditionReport:
    threshold = max(0.1 * partial, 0.01)
    half = terms.size // 2
    early = float(np.mean(terms[:half])) if half else 0.0
    late = float(np.mean(terms[half:]))
    decays = late <= early or late == 0.0
    ok = math.isfinite(partial) and math.isfinite(tail) and tail < threshold and decays
    verdict = PASS if ok else FAIL
    notes = []
    if se is not None and math.isfinite(tail):
        # decision flips within two standard errors of the partial sum
        lo, hi = max(0.1 * (partial - 2 * se), 0.01), max(0.1 * (partial + 2 * se), 0.01)
        if (tail < lo) != (tail < hi):
            verdict = INCONCLUSIVE
            notes.append("partial sum too noisy to decide the tail ratio")
    cps = checkpoints(terms.size, start=min(10, terms.size))
    cum = np.cumsum(terms)
    diags = [{"n": n, "value": float(cum[n - 1])} for n in cps]
    diags[-1]["bound"] = float(partial + tail)
    summary = {"partial_sum": partial, "tail_bound": tail, "threshold": threshold,
               "standard_error": se, "early_mean_term": early, "late_mean_term": late,
               "horizon": law.N, **extra}
    return ConditionReport(cid, verdict, params, diags, summary, notes)


def check_e1_e2(law, delta: float = 1.0, gamma_thresh: float = 1.0,
                eps: Sequence[float] = (0.5, 1.0, 2.0),
                sigma2: Optional[float] = None) -> list:
    """Heyde-Scott (e1) and (e2): finite-horizon partial sums plus a tail majorant.

    With ``M = sup_n E|Z_n|^(2+delta)`` and ``s_n^2 ~ sigma^2 n`` beyond the
    horizon ``N``,

    * (e1) tail <= ``gamma^(2-delta) M sum_{n>N} s_n^(-2-delta)``,
    * (e2) tail <= ``eps^(-1-delta) M sum_{n>N} s_n^(-2-delta)``,

    and ``sum_{n>N} (sigma^2 n)^(-1-delta/2)`` is a Hurwitz zeta value.
    A series passes when its tail bound is below ``max(10% of the partial
    sum, 0.01)`` and its terms decay over the horizon.
    """
    if delta <= 0:
        raise ValidationError("delta must be positive")
    if not isinstance(law, ZLaw):
        law = ZLaw.from_ensemble(law)
    if law.replicas is not None and law.replicas < 32:
        raise ValidationError("need at least 32 replicas")
    N = law.N
    s2 = np.cumsum(law.expect(lambda z, n: z * z))
    s = np.sqrt(s2)
    if sigma2 is None:
        sigma2 = float(s2[-1] / N)
    M = _moment_sup(law, 2.0 + delta)
    if sigma2 > 0:
        zsum = float(special.zeta(1.0 + delta / 2.0, N + 1)) * sigma2 ** (-1.0 - delta / 2.0)
    else:
        zsum = 0.0 if M == 0 else math.inf
    safe = np.where(s > 0, s, 1.0)[:, None]
    params = {"delta": delta, "gamma": gamma_thresh, "eps": list(eps), "horizon": N}
    extra = {"sigma2": sigma2, "moment_sup": M}

    def e1(z, n):
        si = safe[n[:, 0]]
        return np.where(np.abs(z) < gamma_thresh * si, z ** 4, 0.0) / si ** 4

    terms = law.expect(e1)
    sums = law.per_replica_sums(e1)
    se = None if sums is None else float(np.std(sums, ddof=1) / math.sqrt(sums.size))
    tail = gamma_thresh ** (2.0 - delta) * M * zsum
    reports = [_series_report("e1", terms, float(terms.sum()), se, tail, law, params, extra)]

    e2_reports = []
    for e in eps:
        def e2(z, n, e=e):
            si = safe[n[:, 0]]
            return np.where(np.abs(z) >= e * si, np.abs(z), 0.0) / si

        terms = law.expect(e2)
        sums = law.per_replica_sums(e2)
        se = None if sums is None else float(np.std(sums, ddof=1) / math.sqrt(sums.size))
        tail = e ** (-1.0 - delta) * M * zsum
        e2_reports.append(_series_report(f"e2[eps={e:g}]", terms, float(terms.sum()), se, tail,
                                         law, dict(params, eps=e), extra))
    reports.append(ConditionReport(
        "e2", combine_verdicts(r.verdict for r in e2_reports), params,
        [d for r in e2_reports for d in [dict(x, eps=r.params["eps"]) for x in r.diagnostics]],
        {f"eps={r.params['eps']:g}": r.summary for r in e2_reports},
        [n for r in e2_reports for n in r.notes]))
    return reports


# --------------------------------------------------------------------------
# (e3), SLLN
# --------------------------------------------------------------------------


def check_e3(Z, sigma2: float, n0: int = 1, tol: float = 0.02, sub_tol: float = 0.03,
             min_length: int = 10_000) -> ConditionReport:
    """``(1/n) sum Z_k^2 -> sigma^2`` along one path, plus the ``n0``-spaced sub-averages."""
    if not sigma2 > 0:
        raise DegenerateVariance(f"sigma^2 = {sigma2!r}")
    Z = np.asarray(Z, dtype=float)
    n = Z.size
    params = {"sigma2": sigma2, "n0": n0, "tol": tol, "sub_tol": sub_tol}
    if n < min_length:
        return ConditionReport("e3", INCONCLUSIVE, params,
                               notes=[f"sequence of length {n} is shorter than {min_length}"])
    z2 = Z * Z
    cum = np.cumsum(z2)
    cps = checkpoints(n)
    devs = [float(abs(cum[c - 1] / c - sigma2) / sigma2) for c in cps]
    diags = [{"n": c, "value": float(cum[c - 1] / c), "relative_deviation": d, "bound": tol}
             for c, d in zip(cps, devs)]
    final = devs[-1]
    shrinking = bool(final <= max(devs[: max(1, len(devs) // 2)]))
    subs = []
    for i in range(1, n0 + 1):
        seq = z2[i - 1::n0]
        avg = float(seq.mean())
        subs.append({"i": i, "n": int(seq.size), "value": avg,
                     "relative_deviation": float(abs(avg - sigma2) / sigma2), "bound": sub_tol})
    sub_ok = all(s["relative_deviation"] <= sub_tol for s in subs)
    ok = final <= tol and shrinking and sub_ok
    return ConditionReport("e3", PASS if ok else FAIL, params, diags,
                           {"final_average": float(cum[-1] / n), "final_deviation": final,
                            "deviations_shrink": shrinking, "sub_averages": subs})


def check_slln(W, sigma: Optional[float] = None, min_length: int = 10_000) -> ConditionReport:
    """``W_n / n -> 0``; passes iff ``|W_n/n| <= max(3 sigma sqrt(2 log log n / n), 0.01)``.

    ``W`` holds ``W_0 = 0, W_1, ..., W_n``. Without ``sigma`` the sample
    standard deviation of the increments is used as the scale.
    """
    W = np.asarray(W, dtype=float)
    n = W.size - 1
    if sigma is None:
        sigma = float(np.std(np.diff(W))) if n > 1 else 0.0
    params = {"sigma": sigma}
    if n < min_length:
        return ConditionReport("slln", INCONCLUSIVE, params,
                               notes=[f"sequence of length {n} is shorter than {min_length}"])

    def bound(m):
        return max(3.0 * sigma * math.sqrt(2.0 * math.log(math.log(m)) / m), 0.01)

    diags = [{"n": c, "value": float(W[c] / c), "bound": bound(c)} for c in checkpoints(n)]
    ok = bool(abs(diags[-1]["value"]) <= diags[-1]["bound"])
    return ConditionReport("slln", PASS if ok else FAIL, params, diags,
                           {"final_average": diags[-1]["value"], "final_bound": diags[-1]["bound"]})


def check_h3(report: MomentReport) -> ConditionReport:
    """Wrap a moment report: pass iff the moment sequence is trend-bounded and finite."""
    ok = report.trend_bounded and math.isfinite(report.max_estimate)
    diags = [{"n": n, "value": e, "se": s} for n, e, s in
             zip(report.n_grid, report.estimates, report.standard_errors)]
    return ConditionReport("H3", PASS if ok else FAIL, {"delta": report.delta}, diags,
                           {"max": report.max_estimate, "trend_bounded": report.trend_bounded,
                            "stationary_value": report.stationary_value})


# --------------------------------------------------------------------------
# Lemma 1
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class LipschitzAudit:
    n: int
    k: int
    size: int
    step_exponents: list
    measured: float
    bound: float
    L: float
    measured_g: float
    sigma2: float
    L_tilde: Optional[float] = None

    @property
    def passed(self) -> bool:
        return self.measured <= self.bound + 1e-12

    def to_dict(self):
        return dict(self.__dict__, passed=self.passed)


def _lip_table(values: np.ndarray, metric: np.ndarray) -> float:
    diff = np.abs(values[:, None] - values[None, :])
    mask = metric > 0
    return float(np.max(np.where(mask, diff / np.where(mask, metric, 1.0), 0.0)))


def g_nk(y: np.ndarray, chi: np.ndarray, psi: np.ndarray, n: int, k: int,
         sigma2: float) -> np.ndarray:
    """The truncated-average integrand on state tuples ``y`` of shape ``(..., 2(n+k))``."""
    z = chi[y[..., 1::2]] - chi[y[..., 0::2]] + psi[y[..., 1::2]]
    c = np.cumsum(z * z, axis=-1)
    best = None
    for p in range(n, n + k + 1):
        v = np.minimum(c[..., p - 1], p * (1.0 + sigma2)) / p - sigma2
        best = v if best is None else np.minimum(best, v)
    return np.minimum(np.abs(best), 1.0)


def audit_h_lipschitz(kernel: FiniteKernel, psi: Observable, n: int, k: int,
                      cert: ContractionCertificate, chi: Corrector, sigma2: float,
                      step_exponents: Optional[Sequence[int]] = None,
                      max_states: int = 8, max_nk: int = 3) -> LipschitzAudit:
    """Exact Lipschitz constant of ``H_{n,k}`` by enumeration over state tuples.

    ``H_{n,k}(x) = E g_{n,k}(Y_1, ..., Y_{2(n+k)})`` where ``Y_l`` follows
    ``Y_{l-1}`` after ``k_l`` steps (``k_l = 1`` for odd ``l``, ``n0 - 1``
    for even ``l`` by default). Compared with ``L (c gamma + 1) / (1 - gamma0)``
    for ``L = 2 (Lip chi + Lip psi)(1 + sigma^2)``.
    """
    if not cert.gamma0 < 1 or not 0 < cert.gamma < 1:
        raise ValidationError(f"certificate rejected: gamma0={cert.gamma0!r}, "
                              f"gamma={cert.gamma!r}")
    if not isinstance(kernel, FiniteKernel):
        raise ValidationError("Lemma 1 audit runs on finite chains only")
    m = kernel.size
    if m > max_states or n + k > max_nk:
        raise ValidationError(f"instance too large for enumeration ({m} states, n+k={n + k})")
    if n < 1 or k < 1:
        raise ValidationError("n and k must be >= 1")
    length = 2 * (n + k)
    if step_exponents is None:
        step_exponents = [1 if l % 2 == 1 else max(1, cert.n0 - 1)
                          for l in range(1, length + 1)]
    step_exponents = [int(e) for e in step_exponents]
    if len(step_exponents) != length or min(step_exponents) < 1:
        raise ValidationError(f"need {length} step exponents, each >= 1")
    states = np.arange(m)
    chi_v = chi.chi(states)
    psi_v = psi.values(m)
    tuples = np.array(list(itertools.product(range(m), repeat=length)), dtype=np.int64)
    g = g_nk(tuples, chi_v, psi_v, n, k, sigma2).reshape((m,) * length)
    powers = [np.linalg.matrix_power(kernel.matrix, e) for e in step_exponents]
    # H(x) = sum_y P^{k_1}(x,y_1) P^{k_2}(y_1,y_2) ... g(y): integrate out y_L, ..., y_2
    acc = g
    for l in range(length - 1, 0, -1):
        acc = np.einsum("...ij,ij->...i", acc, powers[l])
    H = powers[0] @ acc
    metric = kernel.space.metric_matrix
    measured = _lip_table(H, metric)
    # per-variable Lipschitz constant of g
    lg = 0.0
    for axis in range(length):
        gm = np.moveaxis(g, axis, 0).reshape(m, -1)
        for a in range(m):
            for b in range(a + 1, m):
                if metric[a, b] > 0:
                    lg = max(lg, float(np.max(np.abs(gm[a] - gm[b]))) / metric[a, b])
    L = 2.0 * (_lip_table(chi_v, metric) + _lip_table(psi_v, metric)) * (1.0 + sigma2)
    bound = L * (cert.c * cert.gamma + 1.0) / (1.0 - cert.gamma0)
    return LipschitzAudit(n, k, m, step_exponents, measured, bound, L, lg, sigma2)


def lipschitz_report(audit: LipschitzAudit) -> ConditionReport:
    notes = []
    if audit.measured > audit.measured_g + 1e-12:
        notes.append("measured Lip(H) exceeds measured per-variable Lip(g); "
                     "expected, since integration propagates the constant")
    return ConditionReport(
        "lemma1", PASS if audit.passed else FAIL,
        {"n": audit.n, "k": audit.k, "step_exponents": audit.step_exponents},
        [{"n": audit.n, "value": audit.measured, "bound": audit.bound}],
        {"L": audit.L, "measured_g": audit.measured_g, "sigma2": audit.sigma2}, notes)


# --------------------------------------------------------------------------
# Borel-Cantelli
# --------------------------------------------------------------------------


def oscillation_cutoff(osc: float, eps: float) -> int:
    """Smallest ``n`` with ``eps sqrt(n) / 2 > osc``; beyond it ``P(A_n) = 0`` exactly."""
    n = int(math.floor((2.0 * osc / eps) ** 2)) + 1
    while eps * math.sqrt(n) / 2.0 <= osc:
        n += 1
    return max(n, 1)


def check_borel_cantelli(kernel: TransitionKernel, chi: Corrector, psi: Observable, eps: float,
                         n_grid: Sequence[int], replicas: int, seed: int, initial="dirac:0",
                         threads=None, slope_max: float = -1.2) -> ConditionReport:
    """Monte Carlo ``P(A_n)`` with
    ``A_n = {|S_n - W_n| >= eps sqrt(n)/2} U {|Z_n - psi(X_n)| >= eps sqrt(n)/2}``.

    ``S_n - W_n = chi(X_n) - chi(X_0)`` and ``Z_n - psi(X_n) = chi(X_n) - chi(X_{n-1})``.
    Bounded correctors give an exact cutoff past which ``P(A_n) = 0``; the
    check then passes iff no event is observed past the cutoff. Otherwise it
    passes iff the fitted log-log slope of the nonzero estimates is at most
    ``slope_max``.
    """
    if not eps > 0:
        raise ValidationError("eps must be positive")
    grid = sorted({int(n) for n in n_grid if n >= 1})
    x = simulate_ensemble(kernel, initial, grid[-1], replicas, seed, purpose="borel_cantelli",
                          threads=threads)
    c0 = chi.chi(x[0])
    probs = []
    for n in grid:
        cn = chi.chi(x[n])
        thr = eps * math.sqrt(n) / 2.0
        hit = (np.abs(cn - c0) >= thr) | (np.abs(cn - chi.chi(x[n - 1])) >= thr)
        probs.append(float(hit.mean()))
    osc = chi.oscillation
    params = {"eps": eps, "replicas": replicas, "seed": seed, "initial": str(initial)}
    summary = {"oscillation": osc}
    if math.isfinite(osc):
        cutoff = oscillation_cutoff(osc, eps)
        past = [p for n, p in zip(grid, probs) if n >= cutoff]
        summary.update(cutoff=cutoff, max_past_cutoff=max(past) if past else None)
        diags = [{"n": n, "value": p, "bound": 0.0 if n >= cutoff else None}
                 for n, p in zip(grid, probs)]
        ok = all(p == 0.0 for p in past)
        notes = [] if past else ["grid ends before the cutoff"]
        verdict = (PASS if ok else FAIL) if past else INCONCLUSIVE
        return ConditionReport("bc", verdict, params, diags, summary, notes)
    diags = [{"n": n, "value": p} for n, p in zip(grid, probs)]
    pos = [(n, p) for n, p in zip(grid, probs) if p > 0]
    if len(pos) >= 3:
        ln = np.log([n for n, _ in pos])
        lp = np.log([p for _, p in pos])
        slope = float(np.polyfit(ln, lp, 1)[0])
        summary["slope"] = slope
        verdict = PASS if slope <= slope_max else FAIL
    elif probs[-1] == 0.0:
        verdict = PASS
        summary["slope"] = None
    else:
        verdict = INCONCLUSIVE
        summary["slope"] = None
    return ConditionReport("bc", verdict, params, diags, summary)
