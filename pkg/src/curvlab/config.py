"""Run configuration: strict JSON schema with documented defaults.

A configuration file is a JSON object whose top-level keys name sections.
Every field has a default, so ``{}`` is a valid file.  Unknown keys, wrong
types and out-of-range values raise :class:`ConfigError` carrying the line
number of the offending key when it can be located in the source text.

Sections and defaults::

    mesh:         n = 32, rho = 0.25, min_angle = 20.0
    prescription: p0_angle = -pi/2, amplitude_f = 1.0, amplitude_h = 1.0
    params:       mu = 0.01, lam = 0.1
    solver:       tol = 1e-10, max_iter = 60, ramp_steps = 1
    mpass:        P = 33, tol_path = 1e-4, max_iter = 2000, scale = null,
                  scan_mus = [], scan_lams = [], scan_P = [17, 33, 65]
    sweep:        lam0 = 0.2, levels = 4, fit = true
    liouville:    c_grid = [0, 0.25, 0.5, 0.75, 1], d_grid = same,
                  tol = 1e-6, A = [[-1, 0], [0, -1]], fit_noise = 1e-6

plus the scalars ``out`` (output directory, default ``"out"``) and
``seed`` (default 0).
"""

from __future__ import annotations

import dataclasses
import json
import math
import re
from dataclasses import dataclass, field, fields

import numpy as np


class ConfigError(ValueError):
    """Invalid configuration.  ``line`` is 1-based or None."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        prefix = f"line {line}: " if line is not None else ""
        super().__init__(prefix + message)


@dataclass
class MeshConfig:
    n: int = 32
    rho: float = 0.25
    min_angle: float = 20.0

    def check(self):
        _require(self.n >= 16, "mesh.n must be at least 16", "n")
        _require(0.0 < self.rho < 0.45, "mesh.rho must lie in (0, 0.45)", "rho")
        _require(0.0 < self.min_angle < 60.0, "mesh.min_angle must lie in (0, 60)", "min_angle")


@dataclass
class PrescriptionConfig:
    p0_angle: float = -0.5 * math.pi
    amplitude_f: float = 1.0
    amplitude_h: float = 1.0

    def check(self):
        _require(math.isfinite(self.p0_angle), "prescription.p0_angle must be finite", "p0_angle")
        _require(self.amplitude_f > 0, "prescription.amplitude_f must be positive", "amplitude_f")
        _require(self.amplitude_h > 0, "prescription.amplitude_h must be positive", "amplitude_h")


@dataclass
class ParamsConfig:
    mu: float = 0.01
    lam: float = 0.1

    def check(self):
        _require(math.isfinite(self.mu) and self.mu >= 0, "params.mu must be >= 0", "mu")
        _require(math.isfinite(self.lam) and self.lam >= 0, "params.lam must be >= 0", "lam")


@dataclass
class SolverConfig:
    tol: float = 1e-10
    max_iter: int = 60
    ramp_steps: int = 1

    def check(self):
        _require(self.tol > 0, "solver.tol must be positive", "tol")
        _require(self.max_iter >= 1, "solver.max_iter must be >= 1", "max_iter")
        _require(self.ramp_steps >= 1, "solver.ramp_steps must be >= 1", "ramp_steps")


@dataclass
class MpassConfig:
    P: int = 33
    tol_path: float = 1e-4
    max_iter: int = 2000
    scale: float | None = None
    scan_mus: list = field(default_factory=list)
    scan_lams: list = field(default_factory=list)
    scan_P: list = field(default_factory=lambda: [17, 33, 65])

    def check(self):
        _require(self.P >= 16, "mpass.P must be at least 16", "P")
        _require(self.tol_path > 0, "mpass.tol_path must be positive", "tol_path")
        _require(self.max_iter >= 1, "mpass.max_iter must be >= 1", "max_iter")
        _require(self.scale is None or self.scale > 0, "mpass.scale must be positive or null", "scale")
        _require(all(m > 0 for m in self.scan_mus), "mpass.scan_mus must be positive", "scan_mus")
        _require(all(x >= 0 for x in self.scan_lams), "mpass.scan_lams must be >= 0", "scan_lams")
        _require(all(p >= 16 for p in self.scan_P), "mpass.scan_P entries must be >= 16", "scan_P")


@dataclass
class SweepConfig:
    lam0: float = 0.2
    levels: int = 4
    fit: bool = True

    def check(self):
        _require(0.0 < self.lam0 <= 0.2, "sweep.lam0 must lie in (0, 0.2]", "lam0")
        _require(self.levels >= 0, "sweep.levels must be >= 0", "levels")


@dataclass
class LiouvilleConfig:
    c_grid: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    d_grid: list = field(default_factory=lambda: [0.0, 0.25, 0.5, 0.75, 1.0])
    tol: float = 1e-6
    A: list = field(default_factory=lambda: [[-1.0, 0.0], [0.0, -1.0]])
    fit_noise: float = 1e-6

    def check(self):
        for name in ("c_grid", "d_grid"):
            vals = getattr(self, name)
            _require(len(vals) > 0 and all(0.0 <= v <= 1.0 for v in vals), f"liouville.{name} must lie in [0, 1]", name)
        _require(self.tol > 0, "liouville.tol must be positive", "tol")
        A = np.asarray(self.A, dtype=float)
        _require(A.shape == (2, 2), "liouville.A must be a 2x2 matrix", "A")
        _require(self.fit_noise >= 0, "liouville.fit_noise must be >= 0", "fit_noise")


@dataclass
class RunConfig:
    mesh: MeshConfig = field(default_factory=MeshConfig)
    prescription: PrescriptionConfig = field(default_factory=PrescriptionConfig)
    params: ParamsConfig = field(default_factory=ParamsConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    mpass: MpassConfig = field(default_factory=MpassConfig)
    sweep: SweepConfig = field(default_factory=SweepConfig)
    liouville: LiouvilleConfig = field(default_factory=LiouvilleConfig)
    out: str = "out"
    seed: int = 0

    def check(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if dataclasses.is_dataclass(v):
                try:
                    v.check()
                except _FieldError as exc:
                    raise _FieldError(exc.args[0], (f.name, exc.key)) from None
        _require(isinstance(self.out, str) and self.out != "", "out must be a non-empty string", "out")
        _require(self.seed >= 0, "seed must be >= 0", "seed")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


class _FieldError(Exception):
    def __init__(self, message, key):
        super().__init__(message)
        self.key = key


def _require(cond, message, key):
    if not cond:
        raise _FieldError(message, key)


def _line_of(text: str | None, path: tuple) -> int | None:
    """Best-effort line of the last key in ``path`` (searched after its parents)."""
    if text is None:
        return None
    pos = 0
    for key in path:
        m = re.compile(r'"%s"\s*:' % re.escape(str(key))).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1


def _coerce(value, default, typ, where, text):
    """Type-check a leaf value against the field's declared type."""
    bad = ConfigError(f"{'.'.join(where)}: expected {typ}, got {type(value).__name__}", _line_of(text, where))
    if typ == "bool":
        if not isinstance(value, bool):
            raise bad
        return value
    if typ == "int":
        if isinstance(value, bool) or not isinstance(value, int):
            raise bad
        return value
    if typ in ("float", "float | None"):
        if value is None and typ == "float | None":
            return None
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise bad
        return float(value)
    if typ == "str":
        if not isinstance(value, str):
            raise bad
        return value
    if typ == "list":
        if not isinstance(value, list):
            raise bad
        # lists hold numbers, or lists of numbers
        def num(x):
            if isinstance(x, list):
                return [num(y) for y in x]
            if isinstance(x, bool) or not isinstance(x, (int, float)):
                raise bad
            return x

        items = [num(x) for x in value]
        if where[-1] == "scan_P":
            if not all(isinstance(x, int) for x in items):
                raise bad
            return items
        return [[float(y) for y in x] if isinstance(x, list) else float(x) for x in items]
    raise bad


def _build(cls, raw: dict, where: tuple, text):
    if not isinstance(raw, dict):
        raise ConfigError(f"{'.'.join(where) or 'config'}: expected an object", _line_of(text, where))
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(
                f"unknown key {'.'.join(where + (key,))!r}; allowed: {', '.join(sorted(known))}",
                _line_of(text, where + (key,)),
            )
    kwargs = {}
    proto = cls()
    for name, f in known.items():
        if name not in raw:
            continue
        default = getattr(proto, name)
        if dataclasses.is_dataclass(default):
            kwargs[name] = _build(type(default), raw[name], where + (name,), text)
        else:
            kwargs[name] = _coerce(raw[name], default, str(f.type), where + (name,), text)
    return cls(**kwargs)


def parse_config(text: str) -> RunConfig:
    """Parse and validate configuration text."""
    try:
        raw = json.loads(text) if text.strip() else {}
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
    cfg = _build(RunConfig, raw, (), text)
    try:
        cfg.check()
    except _FieldError as exc:
        path = exc.key if isinstance(exc.key, tuple) else (exc.key,)
        raise ConfigError(exc.args[0], _line_of(text, path)) from None
    return cfg


def load_config(path) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def from_dict(raw: dict) -> RunConfig:
    return parse_config(json.dumps(raw))


# --------------------------------------------------------------------------
# output formatting: every float is written with 17 significant digits


def format_float(x) -> str:
    x = float(x)
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def _to_plain(obj):
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return _to_plain(dataclasses.asdict(obj))
    if isinstance(obj, dict):
        return {str(k): _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_to_plain(v) for v in obj.tolist()]
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, indent: int = 2) -> str:
    """JSON text with floats at 17 significant digits and sorted keys."""

    def emit(o, level):
        pad = " " * (indent * (level + 1))
        end = " " * (indent * level)
        if isinstance(o, dict):
            if not o:
                return "{}"
            items = [f"{pad}{json.dumps(k)}: {emit(o[k], level + 1)}" for k in sorted(o)]
            return "{\n" + ",\n".join(items) + "\n" + end + "}"
        if isinstance(o, list):
            if not o:
                return "[]"
            if all(not isinstance(v, (dict, list)) for v in o):
                return "[" + ", ".join(emit(v, level + 1) for v in o) + "]"
            return "[\n" + ",\n".join(pad + emit(v, level + 1) for v in o) + "\n" + end + "]"
        if isinstance(o, bool) or o is None:
            return json.dumps(o)
        if isinstance(o, float):
            return format_float(o)
        if isinstance(o, int):
            return str(o)
        return json.dumps(str(o))

    return emit(_to_plain(obj), 0) + "\n"
