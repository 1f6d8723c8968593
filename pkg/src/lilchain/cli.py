"""Command-line interface: ``lilchain <subcommand> [options]``.

Exit status: 0 when every verdict passes, 2 when any fails (including an
uncertified gap or a degenerate variance), 3 when the only non-passing
verdicts are inconclusive, 1 for usage, configuration and I/O errors.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import math
import os
import sys

import numpy as np

from . import __version__
from .audit import FAIL, PASS
from .config import ALL_CHECKS, ExperimentConfig, load_kernel_file
from .corrector import (build_corrector, corrector_mc, default_truncation, stationary_finite)
from .errors import DegenerateVariance, LilchainError, NoGapCertified
from .experiment import _jsonable, replay, run_experiment
from .kernels import FiniteKernel, Initial, resolve_threads, simulate
from .martingale import (MartingaleSeries, decompose, sigma2_corrector, sigma2_green_kubo)
from .paths import (K_TARGETS, build_theta, cluster_tracker, lil_ratio, lil_running_max,
                    parse_subsequence, theta_stream)
from .wasserstein import certify_contraction, default_pairs

THREADS_ENV = "LILCHAIN_THREADS"


def _count(text: str) -> int:
    """Integer argument that also accepts ``1e7`` style literals."""
    v = float(text)
    if not v.is_integer() or v < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text!r}")
    return int(v)


def _int_list(text: str) -> list:
    return [_count(x) for x in text.replace(",", " ").split()]


def _pairs(text: str) -> list:
    """``0:1,0:2`` -> ``[(0.0, 1.0), (0.0, 2.0)]``."""
    out = []
    for item in text.replace(" ", "").split(","):
        a, _, b = item.partition(":")
        out.append((float(a), float(b)))
    return out


def _write_json(path: str, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")


def _out(args, name: str) -> str:
    os.makedirs(args.out, exist_ok=True)
    return os.path.join(args.out, name)


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, seed=args.seed)
        cfg.validate()
    return cfg


def _seed(args, default: int = 0) -> int:
    return default if args.seed is None else args.seed


def _say(args, text: str) -> None:
    if not args.quiet:
        print(text)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    kernel = load_kernel_file(args.kernel)
    traj = simulate(kernel, Initial.parse(args.initial), args.n, _seed(args))
    path = _out(args, args.name)
    traj.to_csv(path)
    _say(args, f"wrote {path} ({traj.n} steps, kernel {kernel.hash})")
    return 0


def cmd_contraction(args) -> int:
    kernel = load_kernel_file(args.kernel)
    pairs = args.pairs or default_pairs(kernel)
    try:
        cert = certify_contraction(kernel, pairs, args.horizons, args.replicas, _seed(args),
                                   args.tol, args.threads)
    except NoGapCertified as exc:
        _write_json(_out(args, "certificate.json"),
                    {"error": str(exc), "gamma": exc.gamma, "ratios": exc.diagnostics})
        print(f"no gap certified: {exc}", file=sys.stderr)
        return 2
    path = _out(args, "certificate.json")
    _write_json(path, dict(cert.to_dict(), kernel_hash=kernel.hash, seed=_seed(args)))
    _say(args, f"c={cert.c!r} gamma={cert.gamma!r} n0={cert.n0} gamma0={cert.gamma0!r} "
               f"({cert.provenance}) -> {path}")
    return 0


def _certify(cfg, threads):
    kernel = cfg.build_kernel()
    try:
        cert = certify_contraction(kernel, default_pairs(kernel), cfg.horizons,
                                   cfg.cert_replicas, cfg.seed, cfg.tol, threads)
    except NoGapCertified:
        if not cfg.override:
            raise
        cert = None
    return kernel, cert


def cmd_corrector(args) -> int:
    cfg = _load_config(args)
    if args.override:
        cfg = dataclasses.replace(cfg, override=True)
    kernel, cert = _certify(cfg, args.threads)
    psi = cfg.build_observable(kernel)
    if args.x is None:
        mu_star = stationary_finite(kernel) if isinstance(kernel, FiniteKernel) else None
        chi = build_corrector(kernel, psi, mu_star, cert)
        if chi.chi_table is None:
            print("closed-form corrector on a continuous space: pass --x for point values",
                  file=sys.stderr)
            return 1
        path = _out(args, "corrector.csv")
        chi.to_csv(path, {"config_hash": cfg.hash})
        _say(args, f"wrote {path} (residual {chi.residual!r})")
        return 0
    rows = []
    for x in args.x:
        n = args.truncation
        if n is None:
            if cert is None:
                print("--truncation is required without a certificate", file=sys.stderr)
                return 1
            n = default_truncation(psi.lipschitz, cert, kernel.space.diameter, cfg.tol)
        est = corrector_mc(kernel, psi, x, n, args.replicas, cfg.seed, cert,
                           override=cfg.override, threads=args.threads)
        rows.append(json.loads(est.to_json()))
    path = _out(args, "corrector_mc.json")
    _write_json(path, {"config_hash": cfg.hash, "estimates": rows})
    for r in rows:
        _say(args, f"h({r['x']!r}) = {r['estimate']!r} +/- {r['error_bound']!r}")
    return 0


def cmd_variance(args) -> int:
    cfg = _load_config(args)
    kernel, cert = _certify(cfg, args.threads)
    psi = cfg.build_observable(kernel)
    mu_star = stationary_finite(kernel) if isinstance(kernel, FiniteKernel) else None
    chi = build_corrector(kernel, psi, mu_star, cert)
    modes = ["exact", "green_kubo", "mc"] if args.mode == "all" else [args.mode]
    out = {"config_hash": cfg.hash, "seed": cfg.seed}
    for mode in modes:
        if mode == "green_kubo":
            est = sigma2_green_kubo(kernel, psi, mu_star, cert=cert)
        else:
            est = sigma2_corrector(kernel, chi, mu_star, mode=mode, samples=args.samples,
                                   seed=cfg.seed, cert=cert, threads=args.threads)
        out[mode] = est.to_dict()
        _say(args, f"{mode}: sigma^2 = {est.sigma2!r}")
    path = _out(args, "variance.json")
    _write_json(path, out)
    if any(out[m]["sigma2"] < 1e-12 for m in modes if m != "mc"):
        print("degenerate variance", file=sys.stderr)
        return 2
    return 0


def cmd_lil(args) -> int:
    cfg = _load_config(args)
    kernel, cert = _certify(cfg, args.threads)
    psi = cfg.build_observable(kernel)
    mu_star = stationary_finite(kernel) if isinstance(kernel, FiniteKernel) else None
    chi = build_corrector(kernel, psi, mu_star, cert)
    sigma2 = sigma2_corrector(kernel, chi, mu_star).require_positive()
    sigma = math.sqrt(sigma2)
    traj = simulate(kernel, cfg.build_initial(), cfg.n_max, cfg.seed)
    W = decompose(traj, chi).W
    n_lo = min(cfg.lil_n_min, cfg.n_max)
    rm = lil_running_max(W, sigma, n_lo, cfg.n_max)
    lo, hi = cfg.lil_band
    verdict = PASS if lo <= rm <= hi else FAIL
    ratio = lil_ratio(W, sigma, 16)
    running = np.maximum.accumulate(ratio)
    with open(_out(args, "lil.csv"), "w") as fh:
        fh.write(f"# config_hash={cfg.hash} sigma={sigma!r}\n")
        fh.write("n,ratio,running_max\n")
        n = 16
        while n <= cfg.n_max:
            fh.write(f"{n},{float(ratio[n - 16])!r},{float(running[n - 16])!r}\n")
            n = max(n + 1, int(n * 1.1))
    _write_json(_out(args, "lil.json"),
                {"config_hash": cfg.hash, "seed": cfg.seed, "sigma2": sigma2,
                 "n_min": n_lo, "n_max": cfg.n_max, "running_max": rm, "band": [lo, hi],
                 "verdict": verdict})
    _say(args, f"LIL running max over [{n_lo}, {cfg.n_max}] = {rm:.4f}: {verdict}")
    return 0 if verdict == PASS else 2


def cmd_strassen(args) -> int:
    with open(args.input) as fh:
        header = fh.readline()
    series = MartingaleSeries.from_csv(args.input)
    W = series.W
    n_max = min(args.nmax or (len(W) - 1), len(W) - 1)
    if args.sigma is not None:
        sigma = args.sigma
        sigma_src = "given"
    else:
        sigma = math.sqrt(float(np.mean(series.Z[:n_max] ** 2)))
        sigma_src = "mean Z^2"
    n_list = parse_subsequence(args.subsequence, n_max)
    if not n_list:
        print("subsequence is empty below --nmax", file=sys.stderr)
        return 1
    sr = cluster_tracker(theta_stream(W, sigma, n_list), window=args.window)
    checks = []
    for which in ("endpoint", "integral"):
        tgt = K_TARGETS[which]
        v = sr.final_max(which)
        checks.append({"functional": which, "value": v, "bound": [0.5 * tgt, 1.25 * tgt],
                       "ok": 0.5 * tgt <= v <= 1.25 * tgt})
    dmin = sr.recent_min_dist
    checks.append({"functional": "recent_min_dist_to_K", "value": dmin,
                   "bound": [0.0, args.dist_max], "ok": dmin <= args.dist_max})
    verdict = PASS if all(c["ok"] for c in checks) else FAIL
    _write_json(_out(args, "strassen.json"),
                dict(sr.to_dict(), sigma=sigma, sigma_source=sigma_src, input=header.strip(),
                     checks=checks, verdict=verdict))
    build_theta(W, sigma, n_list[-1]).to_csv(_out(args, "theta.csv"),
                                            {"sigma": repr(sigma)})
    for c in checks:
        _say(args, f"{c['functional']}: {c['value']:.4f} in {c['bound']} -> "
                   f"{'ok' if c['ok'] else 'out'}")
    return 0 if verdict == PASS else 2


def cmd_audit(args) -> int:
    cfg = _load_config(args)
    checks = [c.strip() for c in args.check.split(",") if c.strip()]
    unknown = sorted(set(checks) - set(ALL_CHECKS))
    if unknown:
        print(f"unknown checks: {', '.join(unknown)}", file=sys.stderr)
        return 1
    cfg = dataclasses.replace(cfg, enabled=checks, export_series=False)
    report = run_experiment(cfg, None, args.threads)
    conditions = report.data["conditions"]
    _write_json(_out(args, "audit.json"),
                {"config_hash": cfg.hash, "seed": cfg.seed, "conditions": conditions,
                 "skipped": report.data.get("skipped", []), "verdict": report.data["verdict"]})
    for c in conditions:
        _say(args, f"{c['id']}: {c['verdict']}")
    return report.exit_code


def cmd_report(args) -> int:
    cfg = _load_config(args)
    report = run_experiment(cfg, args.out, args.threads)
    for c in report.data["conditions"]:
        _say(args, f"{c['id']}: {c['verdict']}")
    _say(args, f"verdict {report.data['verdict']} -> {os.path.join(args.out, 'report.json')}")
    return report.exit_code


def cmd_replay(args) -> int:
    result = replay(args.report, args.threads, args.out)
    _write_json(_out(args, "replay.json"), result.to_dict())
    if result.identical:
        _say(args, "replay identical")
        return 0
    for m in result.mismatches[:20]:
        print(f"mismatch at {m['field']}: {m['original']!r} != {m['replayed']!r}",
              file=sys.stderr)
    return 2


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def _global_flags(parser, suppress: bool) -> None:
    """Global flags, accepted before or after the subcommand name."""
    def d(v):
        return argparse.SUPPRESS if suppress else v
    parser.add_argument("--seed", type=int, default=d(None),
                        help="master seed (overrides the config seed)")
    parser.add_argument("--threads", type=int, default=d(None),
                        help=f"worker threads (default: ${THREADS_ENV}, else 1)")
    parser.add_argument("--out", default=d("lilchain-out"), help="output directory")
    parser.add_argument("--quiet", action="store_true", default=d(False),
                        help="suppress progress lines")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = argparse.ArgumentParser(prog="lilchain",
                                description="Wasserstein-gap Markov chains: correctors, "
                                            "martingales and LIL audits.")
    _global_flags(p, suppress=False)
    p.add_argument("--version", action="version", version=f"lilchain {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="write a trajectory CSV")
    s.add_argument("--kernel", required=True, help="config file with a [kernel] section")
    s.add_argument("--initial", default="dirac:0")
    s.add_argument("--n", type=_count, required=True)
    s.add_argument("--name", default="trajectory.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("contraction", parents=[common], help="certify W1 contraction")
    s.add_argument("--kernel", required=True)
    s.add_argument("--pairs", type=_pairs, default=None, help="x:y,x:y,...")
    s.add_argument("--horizons", type=_int_list, default=[1, 2, 4, 8, 16])
    s.add_argument("--replicas", type=_count, default=100_000)
    s.add_argument("--tol", type=float, default=1e-6)
    s.set_defaults(func=cmd_contraction)

    s = sub.add_parser("corrector", parents=[common], help="tabulate or estimate the corrector")
    s.add_argument("--config", required=True)
    s.add_argument("--x", type=float, nargs="+", default=None,
                   help="Monte Carlo estimate of h at these points")
    s.add_argument("--truncation", type=_count, default=None)
    s.add_argument("--replicas", type=_count, default=10_000)
    s.add_argument("--override", action="store_true",
                   help="proceed without a contraction certificate")
    s.set_defaults(func=cmd_corrector)

    s = sub.add_parser("variance", parents=[common], help="asymptotic variance sigma^2")
    s.add_argument("--config", required=True)
    s.add_argument("--mode", choices=["exact", "green_kubo", "mc", "all"], default="all")
    s.add_argument("--samples", type=_count, default=1_000_000)
    s.set_defaults(func=cmd_variance)

    s = sub.add_parser("lil", parents=[common], help="LIL running-max ratio series")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_lil)

    s = sub.add_parser("strassen", parents=[common], help="Strassen functionals of theta_n")
    s.add_argument("--input", required=True, help="martingale CSV (n,Z_n,S_n,W_n)")
    s.add_argument("--subsequence", default="geometric:1.5")
    s.add_argument("--nmax", type=_count, default=None)
    s.add_argument("--sigma", type=float, default=None,
                   help="normalizing sigma (default: root mean of Z^2)")
    s.add_argument("--window", type=_count, default=10)
    s.add_argument("--dist-max", type=float, default=0.35)
    s.set_defaults(func=cmd_strassen)

    s = sub.add_parser("audit", parents=[common], help="run selected condition checks")
    s.add_argument("--check", default=",".join(ALL_CHECKS),
                   help="comma list of " + ",".join(ALL_CHECKS))
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_audit)

    s = sub.add_parser("report", parents=[common], help="run the full pipeline")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_report)

    s = sub.add_parser("replay", parents=[common], help="re-run a report and compare")
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_replay)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.threads = resolve_threads(args.threads)
    try:
        return args.func(args)
    except (NoGapCertified, DegenerateVariance) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    except (LilchainError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
