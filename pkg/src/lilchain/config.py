"""Experiment configuration: a sectioned key-value text format.

Grammar (``configparser`` syntax, ``#`` comments, ``key = value``)::

    [kernel]
    type = finite | ifs | ar
    matrix = 0.9 0.1; 0.2 0.8          # finite: rows separated by ';'
    metric = 0 1; 1 0                  # finite, optional (default discrete)
    slopes = 0.5, 0.5                  # ifs
    intercepts = 0, 0.5                # ifs
    probs = 0.5, 0.5                   # ifs
    low = 0                            # ifs
    high = 1                           # ifs
    coef = 0.5                         # ar
    noise = normal | uniform | student_t
    scale = 1                          # ar
    df = 5                             # ar, student_t only
    x0 = 0                             # reference point

    [observable]
    type = table | linear | zero
    values = 1, -2                     # table
    slope = 1                          # linear
    intercept = -0.5                   # linear
    center = true                      # subtract the stationary mean

    [initial]
    law = dirac:0 | uniform | stationary | weights:0.5,0.5

    [experiment]   see ``ExperimentConfig`` fields
    [checks]       see ``ExperimentConfig`` fields

Lists are comma separated. Unknown keys are rejected.
"""
from __future__ import annotations

import configparser
import hashlib
import io
import json
from dataclasses import MISSING, dataclass, field, fields

from .corrector import stationary_finite, stationary_mean_affine
from .errors import ConfigError
from .kernels import ArKernel, FiniteKernel, IfsKernel, Initial, Observable, TransitionKernel

ALL_CHECKS = ("e1", "e2", "e3", "H3", "slln", "bc", "lemma1", "lil", "strassen")

_KERNEL_KEYS = {
    "finite": {"type", "matrix", "metric", "x0"},
    "ifs": {"type", "slopes", "intercepts", "probs", "low", "high", "x0"},
    "ar": {"type", "coef", "noise", "scale", "df", "x0"},
}
_OBS_KEYS = {"type", "values", "slope", "intercept", "center"}


def _floats(text: str) -> list:
    return [float(v) for v in text.replace(",", " ").split()]


def _matrix(text: str) -> list:
    return [_floats(row) for row in text.split(";") if row.strip()]


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (list, tuple)):
        if v and isinstance(v[0], (list, tuple)):
            return "; ".join(" ".join(_fmt(x) for x in row) for row in v)
        return ", ".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"not a boolean: {text!r}")


# --------------------------------------------------------------------------
# kernel and observable specs
# --------------------------------------------------------------------------


def parse_kernel(section) -> dict:
    kind = section.get("type", "").strip().lower()
    if kind not in _KERNEL_KEYS:
        raise ConfigError(f"[kernel] type must be one of {sorted(_KERNEL_KEYS)}")
    extra = set(section) - _KERNEL_KEYS[kind]
    if extra:
        raise ConfigError(f"[kernel] unknown keys for {kind}: {sorted(extra)}")
    spec = {"type": kind}
    try:
        if kind == "finite":
            spec["matrix"] = _matrix(section["matrix"])
            if "metric" in section:
                spec["metric"] = _matrix(section["metric"])
            spec["x0"] = int(float(section.get("x0", "0")))
        elif kind == "ifs":
            for key in ("slopes", "intercepts", "probs"):
                spec[key] = _floats(section[key])
            spec["low"] = float(section.get("low", "0"))
            spec["high"] = float(section.get("high", "1"))
            if "x0" in section:
                spec["x0"] = float(section["x0"])
        else:
            spec["coef"] = float(section["coef"])
            spec["noise"] = section.get("noise", "normal").strip()
            spec["scale"] = float(section.get("scale", "1"))
            if "df" in section:
                spec["df"] = float(section["df"])
            spec["x0"] = float(section.get("x0", "0"))
    except KeyError as exc:
        raise ConfigError(f"[kernel] missing key {exc.args[0]!r}") from None
    except ValueError as exc:
        raise ConfigError(f"[kernel] {exc}") from None
    return spec


def build_kernel(spec: dict, delta: float = 1.0) -> TransitionKernel:
    kind = spec["type"]
    if kind == "finite":
        return FiniteKernel(spec["matrix"], spec.get("metric"), spec.get("x0", 0))
    if kind == "ifs":
        return IfsKernel(spec["slopes"], spec["intercepts"], spec["probs"], spec.get("low", 0.0),
                         spec.get("high", 1.0), spec.get("x0"))
    if kind == "ar":
        return ArKernel(spec["coef"], spec.get("noise", "normal"), spec.get("scale", 1.0),
                        spec.get("df"), delta, spec.get("x0", 0.0))
    raise ConfigError(f"unknown kernel type {kind!r}")


def parse_observable(section) -> dict:
    kind = section.get("type", "").strip().lower()
    extra = set(section) - _OBS_KEYS
    if extra:
        raise ConfigError(f"[observable] unknown keys: {sorted(extra)}")
    spec = {"type": kind, "center": _bool(section.get("center", "false"))}
    if kind == "table":
        spec["values"] = _floats(section["values"])
    elif kind == "linear":
        spec["slope"] = float(section.get("slope", "1"))
        spec["intercept"] = float(section.get("intercept", "0"))
    elif kind != "zero":
        raise ConfigError("[observable] type must be table, linear or zero")
    return spec


def build_observable(spec: dict, kernel: TransitionKernel) -> Observable:
    kind = spec["type"]
    if kind == "table":
        metric = kernel.space.metric_matrix if isinstance(kernel, FiniteKernel) else None
        psi = Observable.from_table(spec["values"], metric)
        if isinstance(kernel, FiniteKernel) and psi.table.size != kernel.size:
            raise ConfigError("observable table length differs from the number of states")
    elif kind == "linear":
        psi = Observable.linear_fn(spec["slope"], spec["intercept"])
    else:
        psi = Observable.zero()
    if spec.get("center"):
        if isinstance(kernel, FiniteKernel):
            mean = float(stationary_finite(kernel).weights @ psi.values(kernel.size))
        else:
            mean = float(psi(stationary_mean_affine(kernel)))
            if psi.linear is None:
                raise ConfigError("centering needs a linear observable on IFS/AR kernels")
        psi = psi.centered(mean)
    return psi


# --------------------------------------------------------------------------
# experiment config
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    kernel: dict
    observable: dict
    initial: str = "dirac:0"
    # [experiment]
    seed: int = 0
    n_max: int = 1_000_000
    replicas: int = 64
    variance_horizon: int = 10_000
    delta: float = 1.0
    horizons: list = field(default_factory=lambda: [1, 2, 4, 8, 16])
    cert_replicas: int = 100_000
    tol: float = 1e-6
    override: bool = False
    subsequence: str = "geometric:1.5"
    lil_n_min: int = 10_000
    export_series: bool = True
    # [checks]
    enabled: list = field(default_factory=lambda: list(ALL_CHECKS))
    eps: list = field(default_factory=lambda: [0.5, 1.0, 2.0])
    e12_horizon: int = 10_000
    e12_replicas: int = 2048
    h3_grid: list = field(default_factory=lambda: [1, 10, 100, 1000])
    h3_replicas: int = 10_000
    bc_eps: float = 1.0
    bc_grid: list = field(default_factory=lambda: [8, 16, 32, 64, 128, 256, 512])
    bc_replicas: int = 10_000
    lemma1_n: int = 1
    lemma1_k: int = 1
    lil_band: list = field(default_factory=lambda: [0.6, 1.4])
    strassen_band: list = field(default_factory=lambda: [0.5, 1.25])
    strassen_dist_max: float = 0.35
    strassen_window: int = 10

    _EXPERIMENT = ("seed", "n_max", "replicas", "variance_horizon", "delta", "horizons",
                   "cert_replicas", "tol", "override", "subsequence", "lil_n_min",
                   "export_series")
    _CHECKS = ("enabled", "eps", "e12_horizon", "e12_replicas", "h3_grid", "h3_replicas",
               "bc_eps", "bc_grid", "bc_replicas", "lemma1_n", "lemma1_k", "lil_band",
               "strassen_band", "strassen_dist_max", "strassen_window")

    def __post_init__(self):
        self.validate()

    def validate(self):
        counts = ("n_max", "replicas", "variance_horizon", "cert_replicas", "e12_horizon",
                  "e12_replicas", "h3_replicas", "bc_replicas", "lemma1_n", "lemma1_k",
                  "lil_n_min", "strassen_window")
        for name in counts:
            if int(getattr(self, name)) <= 0:
                raise ConfigError(f"{name} must be positive")
        if self.seed < 0:
            raise ConfigError("seed must be non-negative")
        for name in ("delta", "tol", "bc_eps", "strassen_dist_max"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if not self.horizons or min(self.horizons) < 1:
            raise ConfigError("horizons must be positive integers")
        if any(e <= 0 for e in self.eps):
            raise ConfigError("eps values must be positive")
        unknown = set(self.enabled) - set(ALL_CHECKS)
        if unknown:
            raise ConfigError(f"unknown checks: {sorted(unknown)}")
        if self.replicas < 2:
            raise ConfigError("replicas must be at least 2")
        Initial.parse(self.initial)

    # ---- serialization -------------------------------------------------
    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self)}

    @property
    def hash(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    def to_text(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        cp["kernel"] = {k: _fmt(v) for k, v in self.kernel.items()}
        cp["observable"] = {k: _fmt(v) for k, v in self.observable.items()}
        cp["initial"] = {"law": self.initial}
        cp["experiment"] = {k: _fmt(getattr(self, k)) for k in self._EXPERIMENT}
        cp["checks"] = {k: _fmt(getattr(self, k)) for k in self._CHECKS}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_text(cls, text: str) -> "ExperimentConfig":
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        cp.optionxform = str
        try:
            cp.read_string(text)
        except configparser.Error as exc:
            raise ConfigError(str(exc)) from None
        unknown = set(cp.sections()) - {"kernel", "observable", "initial", "experiment", "checks"}
        if unknown:
            raise ConfigError(f"unknown sections: {sorted(unknown)}")
        if "kernel" not in cp or "observable" not in cp:
            raise ConfigError("config needs [kernel] and [observable] sections")
        kw = {"kernel": parse_kernel(cp["kernel"]), "observable": parse_observable(cp["observable"])}
        if "initial" in cp:
            kw["initial"] = cp["initial"].get("law", "dirac:0").strip()
        defaults = cls.__dataclass_fields__
        for sect, keys in (("experiment", cls._EXPERIMENT), ("checks", cls._CHECKS)):
            if sect not in cp:
                continue
            extra = set(cp[sect]) - set(keys)
            if extra:
                raise ConfigError(f"[{sect}] unknown keys: {sorted(extra)}")
            for key, raw in cp[sect].items():
                kw[key] = _coerce(key, raw, defaults[key])
        return cls(**kw)

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        with open(path) as fh:
            return cls.from_text(fh.read())

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_text())

    # ---- builders ------------------------------------------------------
    def build_kernel(self) -> TransitionKernel:
        return build_kernel(self.kernel, self.delta)

    def build_observable(self, kernel: TransitionKernel) -> Observable:
        return build_observable(self.observable, kernel)

    def build_initial(self) -> Initial:
        return Initial.parse(self.initial)


def _coerce(key, raw, fdef):
    raw = raw.strip()
    default = fdef.default if fdef.default is not MISSING else fdef.default_factory()
    try:
        if isinstance(default, bool):
            return _bool(raw)
        if isinstance(default, int):
            return int(float(raw))
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, list):
            items = [x for x in raw.replace(",", " ").split() if x]
            if key == "enabled":
                return items
            if default and isinstance(default[0], int) and not isinstance(default[0], bool):
                return [int(float(x)) for x in items]
            return [float(x) for x in items]
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {key}: {raw!r}") from None


def load_kernel_file(path, delta: float = 1.0) -> TransitionKernel:
    """Read just the ``[kernel]`` section of a config file."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
    cp.optionxform = str
    with open(path) as fh:
        cp.read_string(fh.read())
    if "kernel" not in cp:
        raise ConfigError(f"{path}: no [kernel] section")
    return build_kernel(parse_kernel(cp["kernel"]), delta)

