"""End-to-end pipeline: certify, correct, decompose, audit, and report.

Every stage draws from streams keyed by the config seed and a stage name,
and ensembles run in fixed replica blocks, so the numeric content of a
report depends only on the config and the package version.
"""
from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import __version__
from ._backend import BACKEND
from .audit import (FAIL, INCONCLUSIVE, PASS, ConditionReport, ZLaw, audit_h_lipschitz,
                    check_borel_cantelli, check_e1_e2, check_e3, check_h3, check_slln,
                    combine_verdicts, exit_code, lipschitz_report)
from .config import ExperimentConfig
from .corrector import build_corrector, stationary_finite
from .errors import DegenerateVariance, NoGapCertified, ReplayError, ValidationError
from .kernels import FiniteKernel, resolve_threads, simulate
from .martingale import (decompose, ensemble_differences, moment_check_H3, read_header,
                         sigma2_corrector, sigma2_green_kubo, variance_curve)
from .paths import (K_TARGETS, cluster_tracker, lil_ratio, lil_running_max, parse_subsequence,
                    theta_stream)
from .wasserstein import certify_contraction, default_pairs

SERIES_EXPORT_MAX = 1_000_000


@dataclass
class ExperimentReport:
    data: dict
    files: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return self.data["exit_code"]

    def numeric(self) -> dict:
        """The report without the run-dependent ``runtime`` section."""
        return {k: v for k, v in self.data.items() if k != "runtime"}

    def canonical(self) -> str:
        return json.dumps(self.numeric(), sort_keys=True, separators=(",", ":"))

    def to_json(self, **kw) -> str:
        return json.dumps(self.data, **kw)

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json(indent=2, sort_keys=True))
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ExperimentReport":
        with open(path) as fh:
            return cls(json.load(fh))


def digest(a: np.ndarray) -> str:
    a = np.ascontiguousarray(a)
    return hashlib.sha256(a.dtype.str.encode() + a.tobytes()).hexdigest()[:32]


def _jsonable(obj):
    """Convert numpy scalars and non-finite floats for strict JSON."""
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def _band_report(cid, value, lo, hi, params, summary=None) -> ConditionReport:
    ok = lo <= value <= hi
    return ConditionReport(cid, PASS if ok else FAIL, params,
                           [{"value": value, "bound": [lo, hi]}], summary or {})


def run_experiment(config: ExperimentConfig, out_dir: Optional[str] = None,
                   threads: Optional[int] = None) -> ExperimentReport:
    """Run the full pipeline; write ``report.json`` and CSV series to ``out_dir``."""
    t_start = time.perf_counter()
    threads = resolve_threads(threads)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
    cfg = config
    seed = cfg.seed
    kernel = cfg.build_kernel()
    psi = cfg.build_observable(kernel)
    initial = cfg.build_initial()
    enabled = set(cfg.enabled)
    timings = {}
    data = {
        "fingerprint": {"version": __version__, "config_hash": cfg.hash, "seed": seed,
                        "kernel_hash": kernel.hash},
        "config": cfg.to_text(),
        "kernel": kernel.spec(),
        "observable": psi.spec(),
        "initial": initial.describe(),
    }
    reports: list = []
    files: list = []
    meta = {"config_hash": cfg.hash}

    def stage(name):
        timings[name] = time.perf_counter()

    def done(name):
        timings[name] = round(time.perf_counter() - timings[name], 4)

    # ---- certificate --------------------------------------------------
    stage("certificate")
    cert = None
    try:
        cert = certify_contraction(kernel, default_pairs(kernel), cfg.horizons,
                                   cfg.cert_replicas, seed, cfg.tol, threads)
        data["certificate"] = cert.to_dict()
    except NoGapCertified as exc:
        data["certificate"] = {"error": str(exc), "gamma": exc.gamma,
                               "diagnostics": exc.diagnostics}
        if not cfg.override:
            reports.append(ConditionReport("certificate", FAIL, {}, exc.diagnostics,
                                           {"gamma": exc.gamma}, [str(exc)]))
            return _finish(data, reports, files, out_dir, threads, timings, t_start)
    done("certificate")

    # ---- corrector and variance ---------------------------------------
    stage("variance")
    mu_star = stationary_finite(kernel) if isinstance(kernel, FiniteKernel) else None
    chi = build_corrector(kernel, psi, mu_star, cert)
    data["corrector"] = {"kind": chi.kind, "convention": chi.convention,
                         "lipschitz_bound": chi.lipschitz_bound, "residual": chi.residual,
                         "oscillation": chi.oscillation}
    if chi.chi_table is not None:
        data["corrector"]["chi"] = chi.chi_table.tolist()
        data["corrector"]["h"] = chi.h_table.tolist()
    var_exact = sigma2_corrector(kernel, chi, mu_star)
    variance = {"corrector_exact": var_exact.to_dict()}
    if cert is not None:
        variance["green_kubo"] = sigma2_green_kubo(kernel, psi, mu_star, cert=cert).to_dict()
    var_mc = sigma2_corrector(kernel, chi, mu_star, mode="mc", samples=100_000, seed=seed,
                              cert=cert, threads=threads)
    variance["corrector_mc"] = var_mc.to_dict()
    data["variance"] = variance
    sigma2 = var_exact.sigma2
    if var_exact.degenerate:
        data["variance"]["error"] = "degenerate variance: LIL analysis skipped"
        reports.append(ConditionReport("variance", FAIL, {}, [], {"sigma2": sigma2},
                                       ["sigma^2 vanishes; the LIL normalization is undefined"]))
        done("variance")
        return _finish(data, reports, files, out_dir, threads, timings, t_start)
    sigma = math.sqrt(sigma2)
    z_ens, _ = ensemble_differences(kernel, chi, initial, cfg.variance_horizon, cfg.replicas,
                                    seed, threads)
    curve = variance_curve(z_ens, sigma2)
    data["variance"]["curve"] = {
        "replicas": cfg.replicas, "horizon": cfg.variance_horizon,
        "checkpoints": [{"n": int(n), "s2": float(curve.s2[n - 1]),
                         "s2_direct": float(curve.s2_direct[n - 1]),
                         "ratio": float(curve.ratio[n - 1])}
                        for n in _log_grid(cfg.variance_horizon)],
        "final_ratio": curve.final_ratio, "relative_deviation": curve.relative_deviation}
    done("variance")

    # ---- trajectory and martingale ------------------------------------
    stage("trajectory")
    traj = simulate(kernel, initial, cfg.n_max, seed)
    series = decompose(traj, chi)
    data["digests"] = {"trajectory": digest(traj.states), "Z": digest(series.Z),
                       "W": digest(series.W)}
    if out_dir and cfg.export_series and cfg.n_max <= SERIES_EXPORT_MAX:
        traj.to_csv(os.path.join(out_dir, "trajectory.csv"), meta)
        series.to_csv(os.path.join(out_dir, "martingale.csv"), meta)
        files += ["trajectory.csv", "martingale.csv"]
    if out_dir and chi.chi_table is not None:
        chi.to_csv(os.path.join(out_dir, "corrector.csv"), meta)
        files.append("corrector.csv")
    done("trajectory")

    # ---- conditions ---------------------------------------------------
    stage("conditions")
    n0 = cert.n0 if cert is not None else 1
    if enabled & {"e1", "e2"}:
        if isinstance(kernel, FiniteKernel):
            law = ZLaw.exact_finite(kernel, chi, initial, cfg.e12_horizon)
        else:
            z12, _ = ensemble_differences(kernel, chi, initial, cfg.e12_horizon,
                                          cfg.e12_replicas, seed, threads)
            law = ZLaw.from_ensemble(z12)
        for r in check_e1_e2(law, cfg.delta, 1.0, cfg.eps):
            if r.id in enabled:
                reports.append(r)
    if "e3" in enabled:
        reports.append(check_e3(series.Z, sigma2, n0))
    if "H3" in enabled:
        reports.append(check_h3(moment_check_H3(kernel, initial, cfg.delta, cfg.h3_grid,
                                                cfg.h3_replicas, seed, threads)))
    if "slln" in enabled:
        reports.append(check_slln(series.W, sigma))
    if "bc" in enabled:
        reports.append(check_borel_cantelli(kernel, chi, psi, cfg.bc_eps, cfg.bc_grid,
                                            cfg.bc_replicas, seed, initial, threads))
    skipped = []
    if "lemma1" in enabled:
        if isinstance(kernel, FiniteKernel) and cert is not None:
            try:
                audit = audit_h_lipschitz(kernel, psi, cfg.lemma1_n, cfg.lemma1_k, cert, chi,
                                          sigma2)
                reports.append(lipschitz_report(audit))
            except ValidationError as exc:
                skipped.append({"check": "lemma1", "reason": str(exc)})
        else:
            skipped.append({"check": "lemma1", "reason": "needs a certified finite chain"})
    done("conditions")

    # ---- LIL and Strassen ---------------------------------------------
    stage("lil")
    W = series.W
    n_lo = min(cfg.lil_n_min, cfg.n_max)
    if cfg.n_max > 16:
        ratio = lil_ratio(W, sigma, 16)
        pts = [n for n in _log_grid(cfg.n_max) if n >= 16]
        running = np.maximum.accumulate(ratio)
        rm = lil_running_max(W, sigma, n_lo, cfg.n_max)
        data["lil"] = {"n_min": n_lo, "n_max": cfg.n_max, "running_max": rm,
                       "normalization": "sigma*sqrt(2 n log log n)",
                       "series": [{"n": n, "ratio": float(ratio[n - 16]),
                                   "running_max": float(running[n - 16])} for n in pts]}
        if "lil" in enabled:
            reports.append(_band_report("lil", rm, *cfg.lil_band,
                                        {"n_min": n_lo, "n_max": cfg.n_max}))
        if out_dir:
            with open(os.path.join(out_dir, "lil.csv"), "w") as fh:
                fh.write(f"# config_hash={cfg.hash} sigma={sigma!r}\n")
                fh.write("n,ratio,running_max\n")
                for row in data["lil"]["series"]:
                    fh.write(f"{row['n']},{row['ratio']!r},{row['running_max']!r}\n")
            files.append("lil.csv")
    done("lil")
    stage("strassen")
    if "strassen" in enabled and cfg.n_max > 16:
        n_list = parse_subsequence(cfg.subsequence, cfg.n_max)
        sr = cluster_tracker(theta_stream(W, sigma, n_list), window=cfg.strassen_window)
        data["strassen"] = sr.to_dict()
        lo, hi = cfg.strassen_band
        checks = []
        for which in ("endpoint", "integral"):
            tgt = K_TARGETS[which]
            v = sr.final_max(which)
            checks.append({"functional": which, "value": v, "bound": [lo * tgt, hi * tgt],
                           "ok": lo * tgt <= v <= hi * tgt})
        dmin = sr.recent_min_dist
        checks.append({"functional": "recent_min_dist_to_K", "value": dmin,
                       "bound": [0.0, cfg.strassen_dist_max],
                       "ok": dmin <= cfg.strassen_dist_max})
        reports.append(ConditionReport("strassen", PASS if all(c["ok"] for c in checks) else FAIL,
                                       {"subsequence": cfg.subsequence, "n_max": cfg.n_max},
                                       checks))
        if out_dir:
            with open(os.path.join(out_dir, "strassen.json"), "w") as fh:
                json.dump(_jsonable(dict(sr.to_dict(), config_hash=cfg.hash)), fh, indent=2)
            files.append("strassen.json")
    done("strassen")
    data["skipped"] = skipped
    return _finish(data, reports, files, out_dir, threads, timings, t_start)


def _log_grid(n: int) -> list:
    out, k = [], 1
    while k < n:
        out.append(k)
        k *= 10
    out.append(n)
    return out


def _finish(data, reports, files, out_dir, threads, timings, t_start) -> ExperimentReport:
    data["conditions"] = [r.to_dict() for r in reports]
    data["verdict"] = combine_verdicts(r.verdict for r in reports)
    data["exit_code"] = exit_code(reports)
    data["runtime"] = {"threads": threads, "backend": BACKEND, "timings": timings,
                       "elapsed": round(time.perf_counter() - t_start, 3)}
    data = _jsonable(data)
    report = ExperimentReport(data, files)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        cert = data.get("certificate")
        if cert and "error" not in cert:
            with open(os.path.join(out_dir, "certificate.json"), "w") as fh:
                json.dump(dict(cert, config_hash=data["fingerprint"]["config_hash"]), fh,
                          indent=2)
            files.append("certificate.json")
        report.save(os.path.join(out_dir, "report.json"))
        files.append("report.json")
        check_artifacts(out_dir, data["fingerprint"]["config_hash"], files)
    return report


def check_artifacts(out_dir: str, config_hash: str, files) -> None:
    """Reject an output directory whose artifacts carry different config hashes."""
    for name in files:
        path = os.path.join(out_dir, name)
        if name.endswith(".csv"):
            with open(path) as fh:
                found = read_header(fh.readline()).get("config_hash")
        else:
            with open(path) as fh:
                blob = json.load(fh)
            found = blob.get("config_hash") or blob.get("fingerprint", {}).get("config_hash")
        if found != config_hash:
            raise ValidationError(f"{name}: config hash {found!r} differs from {config_hash!r}")


# --------------------------------------------------------------------------
# replay
# --------------------------------------------------------------------------


@dataclass
class ReplayResult:
    original: ExperimentReport
    regenerated: Optional[ExperimentReport]
    mismatches: list

    @property
    def identical(self) -> bool:
        return not self.mismatches

    def to_dict(self) -> dict:
        return {"identical": self.identical, "mismatches": self.mismatches}


def _diff(a, b, path="") -> list:
    if isinstance(a, dict) and isinstance(b, dict):
        out = []
        for k in sorted(set(a) | set(b)):
            out += _diff(a.get(k), b.get(k), f"{path}/{k}")
        return out
    if isinstance(a, list) and isinstance(b, list) and len(a) == len(b):
        out = []
        for i, (x, y) in enumerate(zip(a, b)):
            out += _diff(x, y, f"{path}/{i}")
        return out
    if json.dumps(a) != json.dumps(b):
        return [{"field": path or "/", "original": a, "replayed": b}]
    return []


def replay(report, threads: Optional[int] = None, out_dir: Optional[str] = None
           ) -> ReplayResult:
    """Re-run the config embedded in a report and compare every numeric field."""
    if not isinstance(report, ExperimentReport):
        report = ExperimentReport.load(report)
    data = report.data
    fp = data.get("fingerprint", {})
    if "config" not in data or "seed" not in fp:
        raise ReplayError("report carries no embedded config and seed")
    if fp.get("version") != __version__:
        raise ReplayError(f"report was produced by version {fp.get('version')!r}; "
                          f"this is {__version__!r}")
    cfg = ExperimentConfig.from_text(data["config"])
    mismatches = []
    if cfg.hash != fp.get("config_hash"):
        mismatches.append({"field": "/fingerprint/config_hash", "original": fp.get("config_hash"),
                           "replayed": cfg.hash})
    if cfg.seed != fp.get("seed"):
        mismatches.append({"field": "/fingerprint/seed", "original": fp.get("seed"),
                           "replayed": cfg.seed})
    new = run_experiment(cfg, out_dir, threads)
    mismatches += _diff(report.numeric(), new.numeric())
    # a tampered fingerprint shows up twice; keep each field once
    seen, unique = set(), []
    for m in mismatches:
        if m["field"] not in seen:
            seen.add(m["field"])
            unique.append(m)
    return ReplayResult(report, new, unique)
