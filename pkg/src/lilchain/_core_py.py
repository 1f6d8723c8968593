"""Pure-Python fallback for the compiled loops in ``_core.pyx``.

Same signatures, same operation order; outputs are bit-identical.
Ensembles are vectorized across replicas, single paths use scalar loops.
"""
from bisect import bisect_right

import numpy as np


def advance_finite(cum, x0, u):
    cum = np.ascontiguousarray(cum, dtype=np.float64)
    u = np.ascontiguousarray(u, dtype=np.float64)
    steps, reps = u.shape
    out = np.empty((steps, reps), dtype=np.int64)
    if reps == 1:
        rows = [list(r) for r in cum]
        x = int(x0[0])
        col = out[:, 0]
        for s, v in enumerate(u[:, 0].tolist()):
            x = bisect_right(rows[x], v)
            col[s] = x
        return out
    x = np.asarray(x0, dtype=np.int64).copy()
    for s in range(steps):
        x = (u[s][:, None] >= cum[x]).sum(axis=1)
        out[s] = x
    return out


def advance_ifs(cumprob, slopes, intercepts, x0, u):
    u = np.ascontiguousarray(u, dtype=np.float64)
    slopes = np.asarray(slopes, dtype=np.float64)
    intercepts = np.asarray(intercepts, dtype=np.float64)
    steps, reps = u.shape
    out = np.empty((steps, reps), dtype=np.float64)
    if reps == 1:
        cp = list(cumprob)
        sl = slopes.tolist()
        ic = intercepts.tolist()
        x = float(x0[0])
        col = out[:, 0]
        for s, v in enumerate(u[:, 0].tolist()):
            k = bisect_right(cp, v)
            x = sl[k] * x + ic[k]
            col[s] = x
        return out
    x = np.asarray(x0, dtype=np.float64).copy()
    for s in range(steps):
        k = np.searchsorted(cumprob, u[s], side="right")
        x = slopes[k] * x + intercepts[k]
        out[s] = x
    return out


def advance_ar(coef, x0, eps):
    eps = np.ascontiguousarray(eps, dtype=np.float64)
    steps, reps = eps.shape
    out = np.empty((steps, reps), dtype=np.float64)
    coef = float(coef)
    if reps == 1:
        x = float(x0[0])
        col = out[:, 0]
        for s, e in enumerate(eps[:, 0].tolist()):
            x = coef * x + e
            col[s] = x
        return out
    x = np.asarray(x0, dtype=np.float64).copy()
    for s in range(steps):
        x = coef * x + eps[s]
        out[s] = x
    return out


def _below_or_on(at, av, bt, bv, ct, cv):
    return (bv - av) * (ct - at) <= (cv - av) * (bt - at)


def _above_or_on(at, av, bt, bv, ct, cv):
    return (bv - av) * (ct - at) >= (cv - av) * (bt - at)


def taut_string(t, lo, hi):
    """Shortest path through vertical gates ``[lo[i], hi[i]]`` at times ``t[i]``.

    Both end gates must be degenerate. Returns the contact vertices as
    ``(times, values)``.
    """
    t = np.asarray(t, dtype=np.float64).tolist()
    lo = np.asarray(lo, dtype=np.float64).tolist()
    hi = np.asarray(hi, dtype=np.float64).tolist()
    upper = [(t[0], lo[0])]
    lower = [(t[0], lo[0])]
    uh = lh = 0
    path = [(t[0], lo[0])]
    for i in range(1, len(t)):
        qt, qv = t[i], hi[i]
        if len(lower) - lh > 1 and _below_or_on(*lower[lh], qt, qv, *lower[lh + 1]):
            while len(lower) - lh > 1 and _below_or_on(*lower[lh], qt, qv, *lower[lh + 1]):
                path.append(lower[lh + 1])
                lh += 1
            upper = [lower[lh], (qt, qv)]
            uh = 0
        else:
            while len(upper) - uh > 1 and _above_or_on(*upper[-2], *upper[-1], qt, qv):
                upper.pop()
            upper.append((qt, qv))
        qt, qv = t[i], lo[i]
        if (len(upper) - uh > 1 and upper[uh + 1][0] < qt
                and _above_or_on(*upper[uh], qt, qv, *upper[uh + 1])):
            while (len(upper) - uh > 1 and upper[uh + 1][0] < qt
                   and _above_or_on(*upper[uh], qt, qv, *upper[uh + 1])):
                path.append(upper[uh + 1])
                uh += 1
            lower = [upper[uh], (qt, qv)]
            lh = 0
        else:
            while len(lower) - lh > 1 and _below_or_on(*lower[-2], *lower[-1], qt, qv):
                lower.pop()
            lower.append((qt, qv))
        if lo[i] == hi[i]:
            path.extend(lower[lh + 1:])
            upper = [(qt, qv)]
            lower = [(qt, qv)]
            uh = lh = 0
    path.extend(lower[lh + 1:])
    pt = np.array([p[0] for p in path], dtype=np.float64)
    pv = np.array([p[1] for p in path], dtype=np.float64)
    return pt, pv
