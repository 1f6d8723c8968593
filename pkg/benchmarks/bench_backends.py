"""Compare the compiled core with the pure-Python fallback.

Each kernel loop runs on identical inputs in both backends; the script
checks the outputs are bit-identical and reports the best-of-``repeat``
wall time and the speedup.

    python3 benchmarks/bench_backends.py [--repeat 3] [--quick] [--json out.json]
"""
from __future__ import annotations

import argparse
import json
import sys
import timeit

import numpy as np

from lilchain._backend import BACKEND, _core_py

try:
    from lilchain import _core
except ImportError:  # pragma: no cover - only when the extension is not built
    _core = None


def cases(quick: bool):
    rng = np.random.default_rng(0)
    scale = 10 if quick else 1
    n_path = 1_000_000 // scale
    n_ens, r_ens = 2_000 // scale, 4096

    p = rng.random((5, 5))
    cum = np.cumsum(p / p.sum(axis=1, keepdims=True), axis=1)
    cum[:, -1] = 1.0
    cum = np.ascontiguousarray(cum)
    cp = np.array([0.5, 1.0])
    slopes = np.array([0.5, 0.5])
    inter = np.array([0.0, 0.5])

    yield ("finite, single path", n_path, "advance_finite",
           (cum, np.zeros(1, np.int64), rng.random((n_path, 1))))
    yield ("finite, ensemble", n_ens * r_ens, "advance_finite",
           (cum, np.zeros(r_ens, np.int64), rng.random((n_ens, r_ens))))
    yield ("IFS, single path", n_path, "advance_ifs",
           (cp, slopes, inter, np.zeros(1), rng.random((n_path, 1))))
    yield ("IFS, ensemble", n_ens * r_ens, "advance_ifs",
           (cp, slopes, inter, np.zeros(r_ens), rng.random((n_ens, r_ens))))
    yield ("AR(1), single path", n_path, "advance_ar",
           (0.5, np.zeros(1), rng.normal(size=(n_path, 1))))
    m = 20_000 // scale
    t = np.linspace(0.0, 1.0, m)
    v = np.concatenate([[0.0], np.cumsum(rng.normal(size=m - 1))]) / np.sqrt(m)
    lo, hi = v - 0.05, v + 0.05
    lo[0] = hi[0] = 0.0
    lo[-1] = hi[-1] = v[-1]
    yield ("taut string", m, "taut_string", (t, lo, hi))


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return all(np.array_equal(np.asarray(x), np.asarray(y)) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="inputs 10x smaller")
    ap.add_argument("--json", help="also write the results here")
    args = ap.parse_args(argv)
    if _core is None:
        print("compiled core not available (active backend: %s)" % BACKEND, file=sys.stderr)
        return 1
    rows = []
    print(f"{'case':<22}{'work':>11}{'compiled s':>13}{'python s':>12}{'speedup':>10}  identical")
    for name, work, fn, inputs in cases(args.quick):
        fc, fp = getattr(_core, fn), getattr(_core_py, fn)
        tc = min(timeit.repeat(lambda: fc(*inputs), number=1, repeat=args.repeat))
        tp = min(timeit.repeat(lambda: fp(*inputs), number=1, repeat=args.repeat))
        ident = same(fc(*inputs), fp(*inputs))
        rows.append({"case": name, "work": work, "compiled_s": tc, "python_s": tp,
                     "speedup": tp / tc, "identical": ident})
        print(f"{name:<22}{work:>11,}{tc:>13.4f}{tp:>12.4f}{tp / tc:>9.1f}x  {ident}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0 if all(r["identical"] for r in rows) else 2


if __name__ == "__main__":
    sys.exit(main())
