"""Scenario orchestration: run the configured pipeline and emit artifacts."""

from __future__ import annotations

import time
from functools import cached_property
from pathlib import Path

import numpy as np

from . import estimates as E
from . import plotting, reporting
from .curvature import curvature_bounds, sample_curvature, unit_directions
from .errors import (
    ConfigurationError,
    DomainError,
    FinslerLabError,
    PreconditionError,
    StrongConvexityError,
    UnsupportedFamilyError,
)
from .flow import solve_flow, solve_heat_under_flow
from .heat import solve_heat
from .scenario import CHECKS, Scenario

EXIT_PASS, EXIT_FAIL, EXIT_PRECONDITION = 0, 1, 2
SNAPSHOTS = 20

PRECONDITION_ERRORS = (ConfigurationError, DomainError, PreconditionError, UnsupportedFamilyError, StrongConvexityError)


class Runner:
    """Lazily computes and caches the pieces a scenario needs.

    Parameters
    ----------
    scenario : Scenario
        Validated scenario (already refined if requested).
    out_dir : path-like
        Artifact directory.
    strict_variant : bool
        Decide the flow estimate with the 2 C1 constant.
    """

    def __init__(self, scenario: Scenario, out_dir, *, strict_variant: bool = False):
        self.sc = scenario
        self.out = Path(out_dir)
        self.strict = strict_variant
        self.files: list[str] = []

    # ------------------------------------------------------------- shared data
    @cached_property
    def grid(self):
        return self.sc.grid()

    @cached_property
    def metric(self):
        return self.sc.metric()

    @cached_property
    def measure(self):
        return self.sc.measure(self.metric)

    @cached_property
    def timing(self):
        return self.sc.time_grid(self.metric, self.grid)

    @cached_property
    def u0(self):
        return self.sc.initial(self.grid)

    @property
    def allow_small(self) -> bool:
        return bool(self.sc.config["initial"]["allow_small"])

    @property
    def c_disc(self):
        return self.sc.config["tolerance"]["c_disc"]

    @cached_property
    def table(self):
        dirs = unit_directions(self.grid.n, self.sc.config["curvature"]["directions"])
        return sample_curvature(self.metric, self.measure, self.grid, self.sc.curvature_N, dirs)

    @cached_property
    def bounds(self):
        return curvature_bounds(self.metric, self.measure, self.grid, self.sc.curvature_N, table=self.table)

    @cached_property
    def static_heat(self):
        dt, steps, stride = self.timing
        return solve_heat(self.metric, self.measure, self.u0, self.u0.t + steps * dt, dt, stride=stride,
                          allow_small=self.allow_small)

    def _require_flow(self, check):
        if not self.sc.config["flow"]["enabled"]:
            raise ConfigurationError(f"scenario.flow.enabled: the {check} check needs the Ricci flow enabled")

    @cached_property
    def flow(self):
        dt, steps, _ = self.timing
        sub = self.sc.config["flow"]["substeps"]
        return solve_flow(self.metric, self.grid, self.measure, sub * dt, steps // sub)

    @cached_property
    def flow_heat(self):
        dt, steps, stride = self.timing
        return solve_heat_under_flow(self.flow, self.u0, dt, t_end=self.u0.t + steps * dt, stride=stride,
                                     allow_small=self.allow_small)

    @cached_property
    def static_bound_functions(self):
        spec = self.sc.config["bounds"]
        N = self.sc.curvature_N
        if spec["K"] == "auto":
            K = min(self.bounds.K, 0.0) * spec["K_margin"]
            if spec["kind"] in ("corollary", "remark-poly", "remark-sinh") and K >= 0:
                K = -spec["K_floor"]
        else:
            K = float(spec["K"])
        params = dict(spec["params"])
        if spec["kind"] in ("corollary", "remark-poly", "remark-sinh"):
            if not np.isfinite(N):
                raise DomainError(f"the {spec['kind']} bounds need a finite N")
            params.update(K=K, N=N)
        return E.make_bounds_static(spec["kind"], params), K, N

    @cached_property
    def flow_bound_functions(self):
        spec = self.sc.config["flow_bounds"]
        return E.make_bounds_flow(spec["kind"], spec["params"])

    def quadruples(self, traj):
        h = self.sc.config["harnack"]
        return E.sample_quadruples(traj, h["samples"], self.sc.seed, h["same_point_fraction"])

    # ------------------------------------------------------------------ output
    def _csv(self, name, schema, rows):
        reporting.write_csv(self.out / name, schema, self.grid.n, rows)
        self.files.append(name)

    def _png(self, fn, name, *args):
        if self.sc.config["output"]["plots"]:
            fn(self.out / name, *args)
            self.files.append(name)

    def _gnuplot(self, csv_name, png_name, xcol, ycol, title, budget):
        if self.sc.config["output"]["gnuplot"]:
            name = csv_name.replace(".csv", ".gp")
            (self.out / name).write_text(reporting.gnuplot_script(csv_name, png_name, xcol, ycol, title, budget))
            self.files.append(name)

    def _every(self, count):
        return max(1, int(np.ceil(count / SNAPSHOTS)))

    # ------------------------------------------------------------------ checks
    def check_curvature(self):
        self._csv("curvature.csv", "curvature", reporting.curvature_rows(self.table))
        self._png(plotting.curvature_map, "curvature_ricN.png", self.table, self.grid)
        return {"status": "DONE", "bounds": self.bounds.as_dict()}

    def check_heat(self):
        traj = self.flow_heat if self.sc.config["flow"]["enabled"] else self.static_heat
        self._csv("heat_trajectory.csv", "trajectory", reporting.trajectory_rows(traj, self._every(len(traj))))
        self._csv("heat_mass.csv", "mass", reporting.mass_rows(traj))
        self._png(plotting.field_map, "heat_final.png", self.grid, traj.u[-1], f"$u$ at $t$ = {traj.t[-1]:.4g}", "$u$")
        self._png(plotting.mass_plot, "heat_mass.png", traj)
        m0, m1 = traj.mass(0), traj.mass(len(traj) - 1)
        return {"status": "DONE", "steps": len(traj) - 1, "relative_mass_drift": abs(m1 - m0) / abs(m0),
                "t_end": float(traj.t[-1])}

    def check_flow(self):
        self._require_flow("flow")
        fl = self.flow
        self._csv("flow.csv", "flow", reporting.flow_rows(fl, self._every(len(fl.metrics))))
        self._csv("bounds_trace.csv", "bounds_trace", reporting.bounds_rows(fl))
        self._png(plotting.bounds_plot, "flow_bounds.png", fl)
        return {"status": "DONE", "stationary": fl.stationary, "flow_steps": len(fl.metrics) - 1,
                "dt_flow": fl.dt_flow, "constants": E.flow_constants(fl) if all(
                    b.K3 is not None for b in fl.bounds) else None}

    def _margin_outputs(self, stem, report):
        csv_name = f"{stem}_margins.csv"
        self._csv(csv_name, "margins", reporting.margin_rows(report))
        self._png(plotting.margin_plot, f"{stem}_margins.png", report)
        self._gnuplot(csv_name, f"{stem}_margins_gnuplot.png", 2, 3 + self.grid.n, report.name, report.tol_budget)

    def _harnack_outputs(self, stem, report):
        csv_name = f"{stem}.csv"
        self._csv(csv_name, "harnack", reporting.harnack_rows(report))
        self._png(plotting.harnack_plot, f"{stem}.png", report)

    def check_verify_static(self):
        bounds, K, N = self.static_bound_functions
        rep = E.verify_static_estimate(self.static_heat, bounds, K, N, curvature=self.bounds, c_disc=self.c_disc)
        self._margin_outputs("static_estimate", rep)
        return rep.summary()

    def check_verify_harnack(self):
        bounds, _, _ = self.static_bound_functions
        traj = self.static_heat
        rep = E.verify_harnack_static(traj, self.metric, bounds, self.quadruples(traj), c_disc=self.c_disc)
        self._harnack_outputs("harnack_static", rep)
        return rep.summary()

    def check_verify_flow(self):
        self._require_flow("verify-flow")
        rep = E.verify_flow_estimate(self.flow, self.flow_heat, self.flow_bound_functions, strict=self.strict,
                                     c_disc=self.c_disc)
        self._margin_outputs("flow_estimate", rep)
        return rep.summary()

    def check_verify_harnack_flow(self):
        self._require_flow("verify-harnack-flow")
        heat = self.flow_heat
        rep = E.verify_harnack_flow(self.flow, heat, self.flow_bound_functions, self.quadruples(heat),
                                    c_disc=self.c_disc)
        self._harnack_outputs("harnack_flow", rep)
        return rep.summary()

    # --------------------------------------------------------------------- run
    def run(self, checks) -> dict:
        self.out.mkdir(parents=True, exist_ok=True)
        records, code = {}, EXIT_PASS
        for name in checks:
            if name not in CHECKS:
                raise ConfigurationError(f"unknown check {name!r}; supported: {list(CHECKS)}")
            start = time.perf_counter()
            try:
                rec = getattr(self, "check_" + name.replace("-", "_"))()
                if "passed" in rec:
                    rec["status"] = "PASS" if rec["passed"] else "FAIL"
                    if not rec["passed"]:
                        code = max(code, EXIT_FAIL)
            except PRECONDITION_ERRORS as exc:
                rec = {"status": "PRECONDITION", "error": f"{type(exc).__name__}: {exc}"}
                code = EXIT_PRECONDITION
            except FinslerLabError as exc:
                rec = {"status": "ERROR", "error": f"{type(exc).__name__}: {exc}"}
                code = EXIT_PRECONDITION
            rec["runtime_s"] = round(time.perf_counter() - start, 3)
            records[name] = rec
        summary = {
            "exit_code": code,
            "seed": self.sc.seed,
            "checks": records,
            "files": sorted(set(self.files)),
            **self.sc.echo(),
        }
        reporting.write_summary(self.out, summary)
        return summary
