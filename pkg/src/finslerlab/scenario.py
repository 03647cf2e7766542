"""YAML scenario files: parsing, validation with defaults, and object construction.

The grammar is documented in the README. Every section is a mapping with a
fixed key set; unknown keys are rejected, and every key filled from a
default is recorded in :attr:`Scenario.defaulted`.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from . import metric as M
from .curvature import MeasureField, custom_measure, lebesgue, riemannian_volume
from .errors import ConfigurationError, FinslerLabError
from .fields import ConstantField, ModeField, ParamField, StackedField
from .grid import ScalarField, TorusGrid
from .heat import cfl_limit, constant_plus_mode, gaussian_bump, random_positive

CHECKS = ("curvature", "heat", "flow", "verify-static", "verify-harnack", "verify-flow", "verify-harnack-flow")
FAMILIES = ("euclidean", "riemannian", "randers", "conformal")
INITIAL_FAMILIES = ("constant-plus-mode", "gaussian-bump", "random-positive")
REQUIRED = object()

SCHEMA = {
    "seed": 0,
    "grid": {"n": 2, "m": 32, "L": 1.0},
    "metric": {"family": REQUIRED, "g": None, "a": None, "b": None, "phi": None},
    "measure": "lebesgue",
    "initial": {
        "family": "constant-plus-mode",
        "constant": None,
        "amplitude": None,
        "wavevector": None,
        "phase": 0.0,
        "center": None,
        "tau0": None,
        "floor": 0.0,
        "modes": 3,
        "allow_small": False,
    },
    "time": {"T": None, "steps": None, "dt": None, "cfl_fraction": 0.5, "stride": 1},
    "flow": {"enabled": False, "substeps": 1},
    "curvature": {"N": None, "directions": 16},
    "bounds": {"kind": "corollary", "K": "auto", "K_margin": 1.05, "K_floor": 1e-3, "params": {}},
    "flow_bounds": {"kind": "constant-theta", "params": {"theta": 2.0}},
    "harnack": {"samples": 100, "same_point_fraction": 0.1},
    "tolerance": {"c_disc": None},
    "checks": ["curvature", "heat", "verify-static", "verify-harnack"],
    "output": {"dir": "out", "plots": True, "gnuplot": True},
}


def _fail(path, msg):
    raise ConfigurationError(f"scenario.{path}: {msg}")


def _merge(raw, schema, path, defaulted):
    """Fill defaults recursively; reject unknown keys."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        _fail(path, f"expected a mapping, got {type(raw).__name__}")
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        _fail(f"{path}.{unknown[0]}" if path else unknown[0], f"unknown key; allowed keys: {sorted(schema)}")
    out = {}
    for key, default in schema.items():
        sub = f"{path}.{key}" if path else key
        if key in raw:
            val = raw[key]
            if isinstance(default, dict) and default and key != "params":
                val = _merge(val, default, sub, defaulted)
            out[key] = val
        else:
            if default is REQUIRED:
                _fail(sub, "required key missing")
            if isinstance(default, dict) and default and key != "params":
                out[key] = _merge({}, default, sub, defaulted)
            else:
                out[key] = copy.deepcopy(default)
                defaulted.append(sub)
    return out


def _number(path, value, *, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {value!r}")
    if integer and int(value) != value:
        _fail(path, f"expected an integer, got {value!r}")
    if positive and not value > 0:
        _fail(path, f"must be positive, got {value!r}")
    return int(value) if integer else float(value)


def scalar_field(spec, path: str, L: float) -> ParamField:
    """A number, or ``{constant: c, modes: [[amp, [k...], phase], ...]}``."""
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ConstantField(float(spec))
    if isinstance(spec, dict):
        unknown = sorted(set(spec) - {"constant", "modes"})
        if unknown:
            _fail(f"{path}.{unknown[0]}", "unknown key; allowed keys: ['constant', 'modes']")
        modes = []
        for i, mode in enumerate(spec.get("modes", []) or []):
            if not (isinstance(mode, (list, tuple)) and len(mode) == 3 and isinstance(mode[1], (list, tuple))):
                _fail(f"{path}.modes[{i}]", "expected [amplitude, [k1, ..., kn], phase]")
            k = [_number(f"{path}.modes[{i}]", c, integer=True) for c in mode[1]]
            modes.append((_number(f"{path}.modes[{i}]", mode[0]), k, _number(f"{path}.modes[{i}]", mode[2])))
        return ModeField(_number(f"{path}.constant", spec.get("constant", 0.0)), modes, L)
    _fail(path, f"expected a number or a mode mapping, got {spec!r}")


def _vector_field(spec, path, n, L):
    if not isinstance(spec, (list, tuple)) or len(spec) != n:
        _fail(path, f"expected a list of {n} components")
    comps = [scalar_field(c, f"{path}[{i}]", L) for i, c in enumerate(spec)]
    if all(isinstance(c, ConstantField) for c in comps):
        return ConstantField([float(c.value) for c in comps])
    return StackedField(comps, (n,))


def _matrix_field(spec, path, n, L):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return ConstantField(float(spec) * np.eye(n))
    if not isinstance(spec, (list, tuple)) or len(spec) != n:
        _fail(path, f"expected a number or an {n}x{n} nested list")
    comps = []
    for i, row in enumerate(spec):
        if not isinstance(row, (list, tuple)) or len(row) != n:
            _fail(f"{path}[{i}]", f"expected {n} entries")
        comps.extend(scalar_field(c, f"{path}[{i}][{j}]", L) for j, c in enumerate(row))
    if all(isinstance(c, ConstantField) for c in comps):
        return ConstantField(np.array([float(c.value) for c in comps]).reshape(n, n))
    return StackedField(comps, (n, n))


@dataclass
class Scenario:
    """Validated scenario tree plus the list of keys filled from defaults."""

    config: dict
    defaulted: list = field(default_factory=list)
    source: str | None = None

    # ------------------------------------------------------------------ builders
    @property
    def seed(self) -> int:
        return int(self.config["seed"])

    def grid(self) -> TorusGrid:
        g = self.config["grid"]
        return TorusGrid(g["n"], g["m"], g["L"])

    def metric(self) -> M.FinslerStructure:
        spec = self.config["metric"]
        g = self.grid()
        n, L = g.n, g.L
        fam = spec["family"]
        extra = {"euclidean": (), "riemannian": ("g",), "randers": ("a", "b"), "conformal": ("phi",)}[fam]
        for key in ("g", "a", "b", "phi"):
            if key not in extra and spec[key] is not None:
                _fail(f"metric.{key}", f"not a parameter of the {fam} family")
        if fam == "euclidean":
            return M.euclidean(n)
        if fam == "riemannian":
            if spec["g"] is None:
                _fail("metric.g", "required for the riemannian family")
            metric = M.riemannian(_matrix_field(spec["g"], "metric.g", n, L))
            metric.check_admissible(g)
            return metric
        if fam == "randers":
            if spec["b"] is None:
                _fail("metric.b", "required for the randers family")
            a = None if spec["a"] is None else _matrix_field(spec["a"], "metric.a", n, L)
            return M.randers(a, _vector_field(spec["b"], "metric.b", n, L), g)
        if spec["phi"] is None:
            _fail("metric.phi", "required for the conformal family")
        return M.conformal(scalar_field(spec["phi"], "metric.phi", L), n)

    def measure(self, metric=None) -> MeasureField:
        spec = self.config["measure"]
        if spec == "lebesgue":
            return lebesgue()
        if spec == "riemannian-volume":
            return riemannian_volume(self.metric() if metric is None else metric)
        if isinstance(spec, dict) and set(spec) == {"density"}:
            return custom_measure(scalar_field(spec["density"], "measure.density", self.config["grid"]["L"]))
        _fail("measure", f"expected 'lebesgue', 'riemannian-volume' or {{density: ...}}, got {spec!r}")

    def initial(self, grid: TorusGrid | None = None) -> ScalarField:
        spec = self.config["initial"]
        grid = self.grid() if grid is None else grid
        fam = spec["family"]
        if fam == "constant-plus-mode":
            return constant_plus_mode(
                grid,
                2.0 if spec["constant"] is None else spec["constant"],
                1.0 if spec["amplitude"] is None else spec["amplitude"],
                spec["wavevector"],
                spec["phase"],
            )
        if fam == "gaussian-bump":
            tau0 = grid.h**2 if spec["tau0"] is None else spec["tau0"]
            bump = gaussian_bump(grid, spec["center"], tau0)
            floor = spec["floor"] * float(np.max(bump.values))
            return ScalarField(grid, bump.values + floor)
        return random_positive(
            grid, self.seed, spec["modes"],
            0.3 if spec["amplitude"] is None else spec["amplitude"],
            1.0 if spec["constant"] is None else spec["constant"],
        )

    def time_grid(self, metric=None, grid=None):
        """Return ``(dt, steps, stride)``; dt is either given or a CFL fraction."""
        spec = self.config["time"]
        grid = self.grid() if grid is None else grid
        metric = self.metric() if metric is None else metric
        limit = cfl_limit(metric, grid)
        if spec["dt"] is not None:
            dt = spec["dt"]
            if dt > limit * (1 + 1e-12):
                _fail("time.dt", f"dt = {dt:.6e} exceeds the CFL bound 0.2 h^2 / lambda_max = {limit:.6e}")
        else:
            dt = spec["cfl_fraction"] * limit
        if spec["steps"] is not None:
            steps = spec["steps"]
        else:
            T = spec["T"]
            steps = int(round(T / dt))
            if spec["dt"] is not None:
                if abs(steps * dt - T) > 1e-9 * T:
                    _fail("time.T", f"T = {T} is not a multiple of dt = {dt}")
            else:
                steps = max(1, math.ceil(T / dt - 1e-9))
                dt = T / steps
        return float(dt), int(steps), int(spec["stride"])

    def refined(self, k: int) -> "Scenario":
        """Copy with h halved k times and dt halved k times (CFL-fraction dt is recomputed)."""
        if k <= 0:
            return self
        cfg = copy.deepcopy(self.config)
        cfg["grid"]["m"] = cfg["grid"]["m"] * 2**k
        t = cfg["time"]
        if t["dt"] is not None:
            t["dt"] = t["dt"] / 2**k
            if t["steps"] is not None:
                t["steps"] = t["steps"] * 2**k
        out = Scenario(cfg, list(self.defaulted), self.source)
        out.validate()
        return out

    # ---------------------------------------------------------------- validation
    def validate(self) -> None:
        c = self.config
        c["seed"] = _number("seed", c["seed"], integer=True)
        if c["seed"] < 0:
            _fail("seed", "must be nonnegative")
        g = c["grid"]
        g["n"] = _number("grid.n", g["n"], integer=True)
        g["m"] = _number("grid.m", g["m"], integer=True)
        g["L"] = _number("grid.L", g["L"], positive=True)
        if g["n"] not in (2, 3):
            _fail("grid.n", f"must be 2 or 3, got {g['n']}")
        if g["m"] < 8:
            _fail("grid.m", f"must be at least 8, got {g['m']}")
        if c["metric"]["family"] not in FAMILIES:
            _fail("metric.family", f"unknown family {c['metric']['family']!r}; supported: {list(FAMILIES)}")
        if c["initial"]["family"] not in INITIAL_FAMILIES:
            _fail("initial.family", f"unknown family {c['initial']['family']!r}; supported: {list(INITIAL_FAMILIES)}")
        t = c["time"]
        if (t["T"] is None) == (t["steps"] is None):
            _fail("time", "give exactly one of T and steps")
        if t["T"] is not None:
            t["T"] = _number("time.T", t["T"], positive=True)
        if t["steps"] is not None:
            t["steps"] = _number("time.steps", t["steps"], positive=True, integer=True)
        if t["dt"] is not None:
            t["dt"] = _number("time.dt", t["dt"], positive=True)
        t["cfl_fraction"] = _number("time.cfl_fraction", t["cfl_fraction"], positive=True)
        if t["cfl_fraction"] > 1:
            _fail("time.cfl_fraction", "must not exceed 1")
        t["stride"] = _number("time.stride", t["stride"], positive=True, integer=True)
        c["flow"]["substeps"] = _number("flow.substeps", c["flow"]["substeps"], positive=True, integer=True)
        if not isinstance(c["flow"]["enabled"], bool):
            _fail("flow.enabled", "expected true or false")
        N = c["curvature"]["N"]
        if N is not None and N != "inf":
            c["curvature"]["N"] = _number("curvature.N", N, positive=True)
        c["curvature"]["directions"] = _number("curvature.directions", c["curvature"]["directions"],
                                               positive=True, integer=True)
        b = c["bounds"]
        if b["K"] != "auto":
            b["K"] = _number("bounds.K", b["K"])
        for key in ("K_margin", "K_floor"):
            b[key] = _number(f"bounds.{key}", b[key], positive=True)
        if not isinstance(b["params"], dict) or not isinstance(c["flow_bounds"]["params"], dict):
            _fail("bounds.params", "expected a mapping")
        h = c["harnack"]
        h["samples"] = _number("harnack.samples", h["samples"], positive=True, integer=True)
        h["same_point_fraction"] = _number("harnack.same_point_fraction", h["same_point_fraction"])
        if c["tolerance"]["c_disc"] is not None:
            c["tolerance"]["c_disc"] = _number("tolerance.c_disc", c["tolerance"]["c_disc"], positive=True)
        if not isinstance(c["checks"], list) or not c["checks"]:
            _fail("checks", "expected a nonempty list")
        for i, name in enumerate(c["checks"]):
            if name not in CHECKS:
                _fail(f"checks[{i}]", f"unknown check {name!r}; supported: {list(CHECKS)}")
        # build once so family- and CFL-level errors surface at load time
        try:
            metric = self.metric()
            self.measure(metric)
            dt, steps, _ = self.time_grid(metric)
        except ConfigurationError:
            raise
        except FinslerLabError as exc:
            raise ConfigurationError(f"scenario.metric: {exc}") from exc
        if c["flow"]["enabled"] and steps % c["flow"]["substeps"]:
            _fail("flow.substeps", f"must divide the number of heat steps ({steps})")

    @property
    def curvature_N(self) -> float:
        N = self.config["curvature"]["N"]
        if N is None:
            return float(self.config["grid"]["n"] + 1)
        return float("inf") if N == "inf" else float(N)

    def echo(self) -> dict:
        return {"config": self.config, "defaulted": sorted(self.defaulted), "source": self.source}


def parse_scenario(text: str, source: str = "<string>") -> Scenario:
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f"{source}:{mark.line + 1}:{mark.column + 1}" if mark is not None else source
        problem = getattr(exc, "problem", None) or str(exc)
        raise ConfigurationError(f"{where}: YAML parse error: {problem}") from exc
    if not isinstance(raw, dict):
        raise ConfigurationError(f"{source}: top level must be a mapping")
    defaulted: list = []
    cfg = _merge(raw, SCHEMA, "", defaulted)
    sc = Scenario(cfg, defaulted, source)
    sc.validate()
    return sc


def load_scenario(path) -> Scenario:
    """Read and validate a scenario file."""
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"scenario file {p} does not exist")
    return parse_scenario(p.read_text(), str(p))
