# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops.

Every routine here has a twin in ``_core_py`` that performs the same
floating-point operations in the same order, so both backends return
bit-identical arrays for identical inputs.
"""
import numpy as np
cimport numpy as cnp

cnp.import_array()


cdef inline Py_ssize_t _bisect_right(const double[::1] a, double x) noexcept nogil:
    cdef Py_ssize_t lo = 0, hi = a.shape[0], mid
    while lo < hi:
        mid = (lo + hi) // 2
        if x < a[mid]:
            hi = mid
        else:
            lo = mid + 1
    return lo


def advance_finite(const double[:, ::1] cum, const cnp.int64_t[::1] x0,
                   const double[:, ::1] u):
    cdef Py_ssize_t steps = u.shape[0], reps = u.shape[1], m = cum.shape[1]
    cdef Py_ssize_t s, r, lo, hi, mid
    cdef cnp.int64_t x
    cdef double v
    out = np.empty((steps, reps), dtype=np.int64)
    cdef cnp.int64_t[:, ::1] o = out
    # step-major order: the inner loop walks contiguous rows of u and out
    with nogil:
        for s in range(steps):
            for r in range(reps):
                x = x0[r] if s == 0 else o[s - 1, r]
                v = u[s, r]
                lo = 0
                hi = m
                while lo < hi:
                    mid = (lo + hi) // 2
                    if v < cum[x, mid]:
                        hi = mid
                    else:
                        lo = mid + 1
                o[s, r] = lo
    return out


def advance_ifs(const double[::1] cumprob, const double[::1] slopes,
                const double[::1] intercepts, const double[::1] x0,
                const double[:, ::1] u):
    cdef Py_ssize_t steps = u.shape[0], reps = u.shape[1]
    cdef Py_ssize_t s, r, k
    cdef double x
    out = np.empty((steps, reps), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for s in range(steps):
            for r in range(reps):
                x = x0[r] if s == 0 else o[s - 1, r]
                k = _bisect_right(cumprob, u[s, r])
                o[s, r] = slopes[k] * x + intercepts[k]
    return out


def advance_ar(double coef, const double[::1] x0, const double[:, ::1] eps):
    cdef Py_ssize_t steps = eps.shape[0], reps = eps.shape[1]
    cdef Py_ssize_t s, r
    cdef double x
    out = np.empty((steps, reps), dtype=np.float64)
    cdef double[:, ::1] o = out
    with nogil:
        for s in range(steps):
            for r in range(reps):
                x = x0[r] if s == 0 else o[s - 1, r]
                o[s, r] = coef * x + eps[s, r]
    return out


cdef inline bint _below_or_on(double at, double av, double bt, double bv,
                              double ct, double cv) noexcept nogil:
    # slope(a, b) <= slope(a, c), with b and c strictly right of a
    return (bv - av) * (ct - at) <= (cv - av) * (bt - at)


cdef inline bint _above_or_on(double at, double av, double bt, double bv,
                              double ct, double cv) noexcept nogil:
    # slope(a, b) >= slope(a, c)
    return (bv - av) * (ct - at) >= (cv - av) * (bt - at)


def taut_string(const double[::1] t, const double[::1] lo, const double[::1] hi):
    """Shortest path through vertical gates ``[lo[i], hi[i]]`` at times ``t[i]``.

    Both end gates must be degenerate. Returns the contact vertices as
    ``(times, values)``.
    """
    cdef Py_ssize_t m = t.shape[0]
    cdef Py_ssize_t i, k, npath = 0
    # chains are deques stored in flat buffers: head index + tail index
    ut_arr = np.empty(m + 1); uv_arr = np.empty(m + 1)
    lt_arr = np.empty(m + 1); lv_arr = np.empty(m + 1)
    pt_arr = np.empty(2 * m + 2); pv_arr = np.empty(2 * m + 2)
    cdef double[::1] ut = ut_arr, uv = uv_arr, lt = lt_arr, lv = lv_arr
    cdef double[::1] pt = pt_arr, pv = pv_arr
    cdef Py_ssize_t uh = 0, ue = 0, lh = 0, le = 0
    cdef double qt, qv
    with nogil:
        ut[0] = t[0]; uv[0] = lo[0]; ue = 1
        lt[0] = t[0]; lv[0] = lo[0]; le = 1
        pt[0] = t[0]; pv[0] = lo[0]; npath = 1
        for i in range(1, m):
            # upper constraint point
            qt = t[i]; qv = hi[i]
            if le - lh > 1 and _below_or_on(lt[lh], lv[lh], qt, qv, lt[lh + 1], lv[lh + 1]):
                while le - lh > 1 and _below_or_on(lt[lh], lv[lh], qt, qv, lt[lh + 1], lv[lh + 1]):
                    pt[npath] = lt[lh + 1]; pv[npath] = lv[lh + 1]; npath += 1
                    lh += 1
                uh = 0; ue = 0
                ut[0] = lt[lh]; uv[0] = lv[lh]
                ut[1] = qt; uv[1] = qv; ue = 2
            else:
                while ue - uh > 1 and _above_or_on(ut[ue - 2], uv[ue - 2], ut[ue - 1], uv[ue - 1], qt, qv):
                    ue -= 1
                ut[ue] = qt; uv[ue] = qv; ue += 1
            # lower constraint point
            qt = t[i]; qv = lo[i]
            if ue - uh > 1 and ut[uh + 1] < qt and _above_or_on(ut[uh], uv[uh], qt, qv, ut[uh + 1], uv[uh + 1]):
                while ue - uh > 1 and ut[uh + 1] < qt and _above_or_on(ut[uh], uv[uh], qt, qv, ut[uh + 1], uv[uh + 1]):
                    pt[npath] = ut[uh + 1]; pv[npath] = uv[uh + 1]; npath += 1
                    uh += 1
                lh = 0; le = 2
                lt[0] = ut[uh]; lv[0] = uv[uh]
                lt[1] = qt; lv[1] = qv
            else:
                while le - lh > 1 and _below_or_on(lt[le - 2], lv[le - 2], lt[le - 1], lv[le - 1], qt, qv):
                    le -= 1
                lt[le] = qt; lv[le] = qv; le += 1
            if lo[i] == hi[i]:
                # pinned gate: the path must pass through it
                for k in range(lh + 1, le):
                    pt[npath] = lt[k]; pv[npath] = lv[k]; npath += 1
                uh = 0; ue = 1; ut[0] = qt; uv[0] = qv
                lh = 0; le = 1; lt[0] = qt; lv[0] = qv
        for i in range(lh + 1, le):
            pt[npath] = lt[i]; pv[npath] = lv[i]; npath += 1
    return pt_arr[:npath].copy(), pv_arr[:npath].copy()
