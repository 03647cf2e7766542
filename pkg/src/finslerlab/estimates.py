"""Bound-function triples, their admissibility conditions, and margin checks on solver output.

A margin is (left side - right side) of an inequality; PASS means the
largest margin does not exceed the tolerance budget.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.integrate import quad

from .errors import DomainError, PreconditionError
from .geodesics import distance_graph, effective_distance, segment_distance, segment_integral, GAUSS16
from .heat import HeatTrajectory, log_derivatives

VERDICT_RTOL = 1e-9
QUAD_RTOL = 1e-11


def numeric_derivative(fn, t):
    """Five-point centered derivative with relative step 1e-3."""
    t = np.asarray(t, dtype=float)
    e = 1e-3 * t
    return (fn(t - 2 * e) - 8 * fn(t - e) + 8 * fn(t + e) - fn(t + 2 * e)) / (12 * e)


def _vec(fn):
    """Vectorize a scalar function of t over arrays."""

    def call(t):
        t = np.asarray(t, dtype=float)
        if t.ndim == 0:
            return float(fn(float(t)))
        return np.array([fn(float(s)) for s in t.ravel()]).reshape(t.shape)

    return call


def _integral(fn, a, b):
    if b <= a:
        return 0.0
    return quad(fn, a, b, epsabs=0.0, epsrel=QUAD_RTOL, limit=400)[0]


@dataclass(frozen=True, eq=False)
class BoundFunctionSet:
    """beta, lambda, Psi on (0, T] with first derivatives.

    ``one_minus_beta`` is evaluated directly where a closed form avoids the
    cancellation in ``1 - beta`` at small t.
    """

    kind: str
    beta: Callable
    lam: Callable
    psi: Callable
    dbeta: Callable | None = None
    dlam: Callable | None = None
    dpsi: Callable | None = None
    one_minus_beta: Callable | None = None
    b: Callable | None = None
    params: dict = field(default_factory=dict)

    def d_beta(self, t):
        return self.dbeta(t) if self.dbeta is not None else numeric_derivative(self.beta, t)

    def d_lam(self, t):
        return self.dlam(t) if self.dlam is not None else numeric_derivative(self.lam, t)

    def d_psi(self, t):
        return self.dpsi(t) if self.dpsi is not None else numeric_derivative(self.psi, t)

    def om_beta(self, t):
        return self.one_minus_beta(t) if self.one_minus_beta is not None else 1.0 - self.beta(t)

    def log_lam_prime(self, t):
        return self.d_lam(t) / self.lam(t)

    def describe(self) -> dict:
        return {"kind": self.kind} | {k: v for k, v in self.params.items() if isinstance(v, (int, float, str))}


def _power_lambda(p):
    return (lambda t: np.asarray(t, dtype=float) ** p), (lambda t: p * np.asarray(t, dtype=float) ** (p - 1))


def _generator(spec, K):
    """Named generators b(t) with derivatives for the corollary construction."""
    if callable(spec):
        return spec, (lambda t: numeric_derivative(spec, t)), {"b": "custom"}
    name = spec.get("name", "power")
    if name == "power":
        c, k = float(spec.get("c", 1.0)), float(spec.get("k", 2.0))
        return (lambda t: c * t**k), (lambda t: c * k * t ** (k - 1)), {"b": f"{c}*t^{k}"}
    raise DomainError(f"unknown generator {name!r}; supported: power")


def _check_generator(b, db, T):
    ts = np.geomspace(1e-8 * T, T, 64)
    vals = b(ts)
    if np.any(vals <= 0) or np.any(np.diff(vals) <= 0):
        raise DomainError("generator b must be positive and increasing on (0, T]")
    if b(1e-12 * T) > 1e-6 * b(T):
        raise DomainError("generator b must satisfy b(0+) = 0")
    g = lambda t: db(t) ** 2 / b(t)
    p = math.log(g(1e-7 * T) / g(1e-8 * T)) / math.log(10.0)
    if p <= -1.0 + 1e-3:
        raise DomainError(f"b'^2/b behaves like t^{p:.3f} near 0 and is not integrable")


def corollary_bounds(K: float, N: float, generator=None, lam: str = "sqrt-b", T: float = 1.0) -> BoundFunctionSet:
    """beta = 1 + 2K e^{2Kt} Q/b with Q = int_0^t b e^{-2Ks} ds, Psi = N/(8b) int_0^t b'^2/(b beta).

    ``lam`` selects lambda = sqrt(b) (default) or lambda = b.
    """
    if not K < 0:
        raise DomainError(f"the corollary construction needs K < 0, got {K}")
    b, db, info = _generator(generator if generator is not None else {"name": "power", "k": 2.0}, K)
    _check_generator(b, db, T)
    b = _vec(b) if not isinstance(b(np.ones(2)), np.ndarray) else b

    def Q(t):
        return _integral(lambda s: b(s) * math.exp(-2 * K * s), 0.0, t)

    def om(t):
        return -2 * K * math.exp(2 * K * t) * Q(t) / b(t)

    def beta(t):
        return 1.0 - om(t)

    def dbeta(t):
        return 2 * K * beta(t) - 2 * K * math.exp(2 * K * t) * Q(t) * db(t) / b(t) ** 2

    def psi(t):
        return N / (8 * b(t)) * _integral(lambda s: db(s) ** 2 / (b(s) * beta(s)), 0.0, t)

    def dpsi(t):
        return -db(t) / b(t) * psi(t) + N * db(t) ** 2 / (8 * b(t) ** 2 * beta(t))

    if lam == "sqrt-b":
        lam_f = lambda t: np.sqrt(b(t))
        dlam_f = lambda t: db(t) / (2 * np.sqrt(b(t)))
    elif lam == "b":
        lam_f, dlam_f = b, db
    else:
        raise DomainError(f"lambda choice {lam!r} not in ('sqrt-b', 'b')")
    return BoundFunctionSet(
        "corollary", _vec(beta), lam_f, _vec(psi), _vec(dbeta), dlam_f, _vec(dpsi), _vec(om), b,
        {"K": K, "N": N, "lambda": lam, **info},
    )


def remark_poly_rhs(n, K, theta, t):
    """n(2-theta)^2/(16 theta(1-theta) t) + n K^2 theta t/4 - n K/2."""
    t = np.asarray(t, dtype=float)
    return n * (2 - theta) ** 2 / (16 * theta * (1 - theta) * t) + n * K**2 * theta * t / 4 - n * K / 2


def remark_poly_bounds(K: float, N: float, theta: float, lam: str = "sqrt-b") -> BoundFunctionSet:
    """Closed forms for b = (1 - theta K t) t^(2/theta - 1): beta = 1/(1 - theta K t)."""
    if not K < 0:
        raise DomainError(f"needs K < 0, got {K}")
    if not 0 < theta < 1:
        raise DomainError(f"theta must lie in (0, 1), got {theta}")
    q = 2 / theta - 1
    a = lambda t: 1 - theta * K * np.asarray(t, dtype=float)
    b = lambda t: a(t) * np.asarray(t, dtype=float) ** q
    db = lambda t: -theta * K * np.asarray(t, dtype=float) ** q + a(t) * q * np.asarray(t, dtype=float) ** (q - 1)
    rhs = lambda t: remark_poly_rhs(N, K, theta, t)
    drhs = lambda t: -N * (2 - theta) ** 2 / (16 * theta * (1 - theta) * np.asarray(t, dtype=float) ** 2) + N * K**2 * theta / 4
    if lam == "sqrt-b":
        lam_f, dlam_f = (lambda t: np.sqrt(b(t))), (lambda t: db(t) / (2 * np.sqrt(b(t))))
    else:
        lam_f, dlam_f = b, db
    return BoundFunctionSet(
        "remark-poly",
        beta=lambda t: 1 / a(t),
        lam=lam_f,
        psi=lambda t: rhs(t) / a(t),
        dbeta=lambda t: theta * K / a(t) ** 2,
        dlam=dlam_f,
        dpsi=lambda t: drhs(t) / a(t) + rhs(t) * theta * K / a(t) ** 2,
        one_minus_beta=lambda t: -theta * K * np.asarray(t, dtype=float) / a(t),
        b=b,
        params={"K": K, "N": N, "theta": theta, "lambda": lam},
    )


def _shc_minus_x(x):
    """sinh(x)cosh(x) - x without cancellation at small x."""
    x = np.asarray(x, dtype=float)
    series = (2 / 3) * x**3 + (2 / 15) * x**5 + (4 / 315) * x**7 + (2 / 2835) * x**9
    return np.where(x < 1e-2, series, 0.5 * np.sinh(2 * x) - x)


def remark_sinh_bounds(K: float, N: float, lam: str = "sqrt-b") -> BoundFunctionSet:
    """Closed forms for b = sinh^2(x) + cosh(x) sinh(x) + K t with x = -K t.

    beta = sinh^2 / (sinh^2 + sinh cosh + K t) and
    Psi = beta * (-N K / 2)(coth x + 1); derivatives are numeric.
    """
    if not K < 0:
        raise DomainError(f"needs K < 0, got {K}")
    xs = lambda t: -K * np.asarray(t, dtype=float)
    b = lambda t: np.sinh(xs(t)) ** 2 + _shc_minus_x(xs(t))
    db = lambda t: -K * (np.sinh(2 * xs(t)) + np.cosh(2 * xs(t)) - 1)
    beta = lambda t: np.sinh(xs(t)) ** 2 / b(t)
    om = lambda t: _shc_minus_x(xs(t)) / b(t)
    psi = lambda t: beta(t) * (-N * K / 2) * (1 / np.tanh(xs(t)) + 1)
    if lam == "sqrt-b":
        lam_f, dlam_f = (lambda t: np.sqrt(b(t))), (lambda t: db(t) / (2 * np.sqrt(b(t))))
    else:
        lam_f, dlam_f = b, db
    return BoundFunctionSet("remark-sinh", beta, lam_f, psi, None, dlam_f, None, om, b,
                            {"K": K, "N": N, "lambda": lam})


def make_bounds_static(kind: str, params: dict | None = None) -> BoundFunctionSet:
    """Build a bound-function triple.

    Kinds: ``constant`` (beta, psi constants), ``affine`` (beta0 + beta1 t,
    psi0 + psi1 t + psi_inv / t), ``power`` (beta = c t^a / (1 + t^a),
    psi = psi_coef t^q), all with lambda = t^p; ``corollary``,
    ``remark-poly`` and ``remark-sinh`` need K < 0 and N.
    """
    p = dict(params or {})
    if kind == "corollary":
        return corollary_bounds(p["K"], p["N"], p.get("b"), p.get("lambda", "sqrt-b"), p.get("T", 1.0))
    if kind == "remark-poly":
        return remark_poly_bounds(p["K"], p["N"], p.get("theta", 0.5), p.get("lambda", "sqrt-b"))
    if kind == "remark-sinh":
        return remark_sinh_bounds(p["K"], p["N"], p.get("lambda", "sqrt-b"))
    lam, dlam = _power_lambda(float(p.get("p", 1.0)))
    arr = lambda t: np.asarray(t, dtype=float)
    if kind == "constant":
        bv, pv = float(p.get("beta", 0.5)), float(p.get("psi", 1.0))
        return BoundFunctionSet(kind, lambda t: bv + 0 * arr(t), lam, lambda t: pv + 0 * arr(t),
                                lambda t: 0 * arr(t), dlam, lambda t: 0 * arr(t), params=p)
    if kind == "affine":
        b0, b1 = float(p.get("beta0", 0.5)), float(p.get("beta1", 0.0))
        c0, c1, ci = float(p.get("psi0", 0.0)), float(p.get("psi1", 0.0)), float(p.get("psi_inv", 1.0))
        return BoundFunctionSet(
            kind, lambda t: b0 + b1 * arr(t), lam, lambda t: c0 + c1 * arr(t) + ci / arr(t),
            lambda t: b1 + 0 * arr(t), dlam, lambda t: c1 - ci / arr(t) ** 2, params=p,
        )
    if kind == "power":
        c, a = float(p.get("c", 1.0)), float(p.get("a", 1.0))
        pc, q = float(p.get("psi_coef", 1.0)), float(p.get("q", -1.0))
        return BoundFunctionSet(
            kind,
            lambda t: c * arr(t) ** a / (1 + arr(t) ** a),
            lam,
            lambda t: pc * arr(t) ** q,
            lambda t: c * a * arr(t) ** (a - 1) / (1 + arr(t) ** a) ** 2,
            dlam,
            lambda t: pc * q * arr(t) ** (q - 1),
            params=p,
        )
    raise DomainError(
        f"unknown bound kind {kind!r}; supported: constant, affine, power, corollary, remark-poly, remark-sinh"
    )


# ---------------------------------------------------------------------------
# condition verdicts


@dataclass(frozen=True)
class Verdict:
    name: str
    passed: bool
    worst: float
    witness_t: float | None
    note: str = ""

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "worst": self.worst, "witness_t": self.witness_t,
                "note": self.note}


def log_time_grid(T: float, count: int = 200, t_min_ratio: float = 1e-6) -> np.ndarray:
    return np.geomspace(t_min_ratio * T, T, count)


def _strict_positive(name, vals, scale, ts):
    ok = vals > VERDICT_RTOL * scale
    i = int(np.argmin(vals / np.maximum(scale, 1e-300)))
    return Verdict(name, bool(np.all(ok)), float(vals[i]), None if np.all(ok) else float(ts[np.argmin(ok)]))


def _nonnegative(name, vals, scale, ts):
    ok = vals >= -VERDICT_RTOL * scale
    i = int(np.argmin(vals / np.maximum(scale, 1e-300)))
    return Verdict(name, bool(np.all(ok)), float(vals[i]), None if np.all(ok) else float(ts[np.argmin(ok)]))


def _lambda_verdict(name, bounds, ts):
    lam = np.asarray(bounds.lam(ts), dtype=float)
    if np.any(lam <= 0):
        return Verdict(name, False, float(np.min(lam)), float(ts[np.argmin(lam > 0)]), "lambda not positive")
    exponent = math.log(lam[1] / lam[0]) / math.log(ts[1] / ts[0])
    ok = exponent > 0
    return Verdict(name, ok, float(lam[0]), None if ok else float(ts[0]),
                   f"lambda ~ t^{exponent:.3f} at the smallest t")


@dataclass(frozen=True)
class ConditionReport:
    verdicts: tuple

    @property
    def passed(self) -> bool:
        return all(v.passed for v in self.verdicts)

    def first_failure(self):
        return next((v for v in self.verdicts if not v.passed), None)

    def as_dict(self):
        return {v.name: v.as_dict() for v in self.verdicts}


def check_conditions_static(bounds: BoundFunctionSet, K: float, N: float, t_grid) -> ConditionReport:
    """Evaluate B1-B5 on ``t_grid``; strict inequalities need a margin of 1e-9 relative."""
    ts = np.sort(np.asarray(t_grid, dtype=float))
    if len(ts) < 2 or ts[0] <= 0:
        raise DomainError("t_grid must contain at least two positive times")
    Km = min(K, 0.0)
    beta = np.asarray(bounds.beta(ts), dtype=float)
    om = np.asarray(bounds.om_beta(ts), dtype=float)
    dbeta = np.asarray(bounds.d_beta(ts), dtype=float)
    llam = np.asarray(bounds.log_lam_prime(ts), dtype=float)
    psi = np.asarray(bounds.psi(ts), dtype=float)
    dpsi = np.asarray(bounds.d_psi(ts), dtype=float)
    A = (dbeta - 2 * Km * beta) / om

    b1 = Verdict("B1", bool(np.all((beta > 0) & (om > 0))), float(min(np.min(beta), np.min(om))),
                 None if np.all((beta > 0) & (om > 0)) else float(ts[np.argmin((beta > 0) & (om > 0))]))
    b2 = _lambda_verdict("B2", bounds, ts)
    b3 = _strict_positive("B3", A - llam, np.abs(A) + np.abs(llam), ts)
    small = psi[: max(3, len(ts) // 20)]
    top = float(np.max(small))
    b4 = Verdict("B4", top >= -VERDICT_RTOL * float(np.max(np.abs(small))), top, None if top >= 0 else float(ts[0]),
                 "max of Psi over the smallest grid times")
    last = N * A**2 / (8 * beta)
    b5 = _nonnegative("B5", dpsi + A * psi - last, np.abs(dpsi) + np.abs(A * psi) + np.abs(last), ts)
    return ConditionReport((b1, b2, b3, b4, b5))


# ---------------------------------------------------------------------------
# reports


@dataclass
class EstimateReport:
    """Margins of one inequality check.

    ``rows`` holds per-time (or per-sample) worst margins as
    ``(t, x, margin)``; ``passed`` compares the overall worst margin with
    ``tol_budget``.
    """

    name: str
    worst_margin: float
    worst_location: tuple
    tol_budget: float
    passed: bool
    verdicts: ConditionReport | None = None
    constants: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    details: dict = field(default_factory=dict)

    def summary(self) -> dict:
        out = {
            "check": self.name,
            "passed": self.passed,
            "worst_margin": self.worst_margin,
            "worst_location": list(self.worst_location) if self.worst_location is not None else None,
            "tol_budget": self.tol_budget,
            "constants": self.constants,
        }
        if self.verdicts is not None:
            out["conditions"] = self.verdicts.as_dict()
        if self.details:
            out["details"] = self.details
        return out


def tolerance_budget(scale: float, h: float, dt: float, c_disc: float | None = None) -> float:
    """C_disc (h + dt) with C_disc = 10 * scale unless given."""
    c = 10.0 * scale if c_disc is None else c_disc
    return c * (h + dt)


def _require(report: ConditionReport):
    bad = report.first_failure()
    if bad is not None:
        raise PreconditionError(f"condition {bad.name} fails (worst {bad.worst:.3e} at t = {bad.witness_t})",
                                condition=bad.name)


def _margin_scan(traj: HeatTrajectory, coef, rhs, c_disc):
    """Margins coef(t) F(grad f)^2 - d_t f - rhs(t) at all interior steps."""
    grid = traj.grid
    rows, scale = [], 0.0
    worst, where = -np.inf, None
    for k in range(1, len(traj) - 1):
        d = log_derivatives(traj, k)
        t = float(traj.t[k])
        m = coef(t) * d.F2.values - d.ft.values - rhs(t)
        scale = max(scale, float(np.max(np.abs(d.F2.values) + np.abs(d.ft.values))))
        i = np.unravel_index(int(np.argmax(m)), grid.shape)
        val = float(m[i])
        rows.append((t, grid.point(i).tolist(), val))
        if val > worst:
            worst, where = val, (t, *grid.point(i).tolist())
    budget = tolerance_budget(scale, grid.h, traj.dt * traj.stride, c_disc)
    return rows, worst, where, budget, scale


def verify_static_estimate(traj: HeatTrajectory, bounds: BoundFunctionSet, K: float, N: float, *,
                           curvature=None, t_grid=None, c_disc=None) -> EstimateReport:
    """betaF(grad f)^2 - d_t f - Psi at every interior step and node."""
    T = float(traj.t[-1])
    conds = check_conditions_static(bounds, K, N, log_time_grid(T) if t_grid is None else t_grid)
    _require(conds)
    if curvature is not None and curvature.K < K - VERDICT_RTOL * max(1.0, abs(K)):
        raise PreconditionError(f"sampled Ric_N minimum {curvature.K:.4e} is below the assumed K = {K:.4e}",
                                condition="Ric_N >= K")
    rows, worst, where, budget, scale = _margin_scan(traj, bounds.beta, bounds.psi, c_disc)
    return EstimateReport(
        "static-estimate", worst, where, budget, worst <= budget, conds,
        {"K": K, "N": N, "field_scale": scale, **bounds.describe()}, rows,
    )


# ---------------------------------------------------------------------------
# Harnack inequalities


def sample_quadruples(traj: HeatTrajectory, count: int, seed: int, same_point_fraction: float = 0.1):
    """Random (s, x, t, y) with s < t stored times, s > 0, x and y grid nodes; some with x = y."""
    rng = np.random.default_rng(seed)
    grid = traj.grid
    K = len(traj)
    if K < 3:
        raise DomainError("need at least three stored steps for Harnack sampling")
    out = []
    n_same = int(round(same_point_fraction * count))
    for q in range(count):
        i, j = sorted(rng.choice(np.arange(1, K), size=2, replace=False))
        x = tuple(int(v) for v in rng.integers(0, grid.m, grid.n))
        y = x if q < n_same else tuple(int(v) for v in rng.integers(0, grid.m, grid.n))
        out.append((int(i), x, int(j), y))
    return out


def _harnack_budget(traj, c_disc):
    logs = np.log(np.stack(traj.u))
    scale = float(np.max(np.abs(logs))) + 1.0
    return tolerance_budget(scale, traj.grid.h, traj.dt * traj.stride, c_disc)


def verify_harnack_static(traj: HeatTrajectory, metric, bounds: BoundFunctionSet, quadruples, *,
                          c_disc=None) -> EstimateReport:
    """ln u(s,x) - ln u(t,y) - d(y,x)^2/(4(t-s)^2) int_s^t 1/beta - int_s^t Psi for each quadruple.

    Quadruples hold stored-step indices and node multi-indices. The
    distance is the smaller of the grid-graph and straight-segment upper
    bounds.
    """
    grid = traj.grid
    budget = _harnack_budget(traj, c_disc)
    rows, worst, where = [], -np.inf, None
    zero_branch = []
    for i, xi, j, yi in quadruples:
        s, t = float(traj.t[i]), float(traj.t[j])
        x, y = grid.point(xi), grid.point(yi)
        d = effective_distance(metric, grid, y, x)
        inv_beta = _integral(lambda r: 1.0 / float(bounds.beta(r)), s, t)
        int_psi = _integral(lambda r: float(bounds.psi(r)), s, t)
        lhs = math.log(traj.u[i][tuple(xi)])
        rhs = math.log(traj.u[j][tuple(yi)]) + d**2 / (4 * (t - s) ** 2) * inv_beta + int_psi
        m = lhs - rhs
        rows.append((s, t, x.tolist(), y.tolist(), d, m))
        if tuple(xi) == tuple(yi):
            zero_branch.append((m, d))
        if m > worst:
            worst, where = m, (s, *x.tolist(), t, *y.tolist())
    return EstimateReport(
        "harnack-static", float(worst), where, budget, worst <= budget, None, bounds.describe(), rows,
        {
            "samples": len(rows),
            "zero_distance_samples": len(zero_branch),
            "zero_distance_worst": max((m for m, _ in zero_branch), default=None),
            "zero_distance_pass": all(m <= 0.0 and d == 0.0 for m, d in zero_branch),
        },
    )


# ---------------------------------------------------------------------------
# time-dependent metrics


@dataclass(frozen=True, eq=False)
class FlowBoundSet:
    """beta and lambda for the flow estimate; ``b`` is set for the b-family choice."""

    kind: str
    beta: Callable
    dbeta: Callable
    lam: Callable
    dlam: Callable
    b: Callable | None = None
    db: Callable | None = None
    params: dict = field(default_factory=dict)

    def describe(self):
        return {"kind": self.kind} | {k: v for k, v in self.params.items() if isinstance(v, (int, float, str))}


def make_bounds_flow(kind: str, params: dict | None = None) -> FlowBoundSet:
    """``constant-theta``: beta = 1/theta, lambda = t (theta > 1); ``b-family``: beta = 1/(1+b), lambda = b."""
    p = dict(params or {})
    arr = lambda t: np.asarray(t, dtype=float)
    if kind == "constant-theta":
        th = float(p.get("theta", 2.0))
        if not th > 1:
            raise DomainError(f"theta must exceed 1, got {th}")
        return FlowBoundSet(kind, lambda t: 1 / th + 0 * arr(t), lambda t: 0 * arr(t), lambda t: arr(t),
                            lambda t: 1 + 0 * arr(t), params={"theta": th})
    if kind == "b-family":
        name = p.get("b", "linear")
        if name == "linear":
            c = float(p.get("theta", 1.0))
            b, db = (lambda t: c * arr(t)), (lambda t: c + 0 * arr(t))
        elif name == "sinh":
            b, db = (lambda t: np.sinh(arr(t))), (lambda t: np.cosh(arr(t)))
        else:
            raise DomainError(f"unknown b {name!r}; supported: linear, sinh")
        return FlowBoundSet(kind, lambda t: 1 / (1 + b(t)), lambda t: -db(t) / (1 + b(t)) ** 2, b, db, b, db,
                            {"b": name, **({"theta": p.get("theta", 1.0)} if name == "linear" else {})})
    raise DomainError(f"unknown flow bound kind {kind!r}; supported: constant-theta, b-family")


def check_conditions_flow(bounds: FlowBoundSet, t_grid) -> ConditionReport:
    ts = np.sort(np.asarray(t_grid, dtype=float))
    beta = np.asarray(bounds.beta(ts), dtype=float)
    dbeta = np.asarray(bounds.dbeta(ts), dtype=float)
    llam = np.asarray(bounds.dlam(ts), dtype=float) / np.asarray(bounds.lam(ts), dtype=float)
    inside = (beta > 0) & (beta < 1)
    c1 = Verdict("C1", bool(np.all(inside)), float(np.min(np.minimum(beta, 1 - beta))),
                 None if np.all(inside) else float(ts[np.argmin(inside)]))
    c2 = _lambda_verdict("C2", bounds, ts)
    expr = 2 * dbeta / (1 - beta) - llam
    c3 = _strict_positive("C3", -expr, np.abs(2 * dbeta / (1 - beta)) + np.abs(llam), ts)
    return ConditionReport((c1, c2, c3))


def flow_constants(flow) -> dict:
    """C1 = K1, C2 = max(K1^2, K2^2), C3 = K3 + K4 with K's maximized over the whole flow."""
    if any(b.K3 is None or b.K4 is None for b in flow.bounds):
        raise PreconditionError("isotropic S-curvature data unavailable for this flow", condition="isotropic S")
    K1 = max(b.K1 for b in flow.bounds)
    K2 = max(b.K2 for b in flow.bounds)
    K3 = max(b.K3 for b in flow.bounds)
    K4 = max(b.K4 for b in flow.bounds)
    return {"K1": K1, "K2": K2, "K3": K3, "K4": K4, "C1": K1, "C2": max(K1**2, K2**2), "C3": K3 + K4}


def flow_rhs(bounds: FlowBoundSet, consts: dict, n: int, t, *, strict: bool = False, with_c3: bool = True):
    """Right side of the flow estimate at time t; ``strict`` uses 2 C1 in the second term."""
    t = np.asarray(t, dtype=float)
    beta, dbeta = bounds.beta(t), bounds.dbeta(t)
    llam = bounds.dlam(t) / bounds.lam(t)
    c1 = (2.0 if strict else 1.0) * consts["C1"]
    out = (n / (2 * beta)) * (llam - 2 * dbeta / (1 - beta))
    out = out + n * (c1 + dbeta) / (2 * beta * (1 - beta)) + n**1.5 * math.sqrt(consts["C2"]) / beta
    if with_c3:
        out = out + math.sqrt(2 * n * consts["C3"])
    return out


def verify_flow_estimate(flow, heat: HeatTrajectory, bounds: FlowBoundSet, *, constants=None, strict: bool = False,
                         t_grid=None, c_disc=None) -> EstimateReport:
    """Margins of the flow estimate with the C1 and the 2 C1 constant; ``strict`` picks the 2 C1 form for PASS."""
    n = heat.grid.n
    T = float(heat.t[-1])
    conds = check_conditions_flow(bounds, log_time_grid(T) if t_grid is None else t_grid)
    _require(conds)
    consts = flow_constants(flow) if constants is None else dict(constants)
    nominal = _margin_scan(heat, bounds.beta, lambda t: flow_rhs(bounds, consts, n, t), c_disc)
    strict_scan = _margin_scan(heat, bounds.beta, lambda t: flow_rhs(bounds, consts, n, t, strict=True), c_disc)
    rows, worst, where, budget, scale = strict_scan if strict else nominal
    details = {
        "nominal_worst_margin": nominal[1],
        "strict_worst_margin": strict_scan[1],
        "mode": "strict" if strict else "nominal",
    }
    details.update(_flow_specializations(heat, bounds, consts, n, c_disc))
    return EstimateReport("flow-estimate", worst, where, budget, worst <= budget, conds,
                          {**consts, "field_scale": scale, **bounds.describe()}, rows, details)


def _flow_specializations(heat, bounds, consts, n, c_disc):
    """Vanishing-S and b-family specializations, reported when their hypotheses hold."""
    out = {}
    if consts["C3"] == 0.0 and bounds.kind == "constant-theta":
        th = bounds.params["theta"]
        rhs = lambda t: (n * th**2 / (2 * t) + n * consts["C1"] * th**3 / (2 * (th - 1))
                         + n**1.5 * th**2 * math.sqrt(consts["C2"])) / th
        out["vanishing_s_constant_theta_worst"] = _margin_scan(heat, bounds.beta, rhs, c_disc)[1]
    else:
        out["vanishing_s_constant_theta_worst"] = None
    if consts["K1"] == 0.0 and bounds.kind == "b-family":
        C = math.sqrt(consts["C2"])
        b, db = bounds.b, bounds.db
        rhs = lambda t: n * (1 + b(t)) * (db(t) / b(t) + C * math.sqrt(n) + math.sqrt(2 * n * consts["C3"]) / (n * (1 + b(t))))
        out["b_family_worst"] = _margin_scan(heat, bounds.beta, rhs, c_disc)[1]
    else:
        out["b_family_worst"] = None
        out["b_family_note"] = "needs Ric_ij >= 0 (K1 = 0) and the b-family choice"
    return out


def static_bounds_from_flow(bounds: FlowBoundSet, consts: dict, n: int) -> BoundFunctionSet:
    """Static triple with Psi equal to the flow right side; used for the stationary comparison."""
    return BoundFunctionSet(
        "from-flow",
        beta=bounds.beta,
        lam=bounds.lam,
        psi=lambda t: flow_rhs(bounds, consts, n, t),
        dbeta=bounds.dbeta,
        dlam=bounds.dlam,
        params=bounds.describe(),
    )


def _path_energy(flow, path_pts, s, t, bounds):
    """int_0^1 F_{tau~}(c, c')^2 / beta(tau~) for a polyline from y to x at constant arc-length speed."""
    D = np.diff(path_pts, axis=0)
    if len(D) == 0 or not np.any(D):
        return 0.0
    m0 = flow.metric_at(t)
    lengths = segment_integral(m0, path_pts[:-1], D)
    total = float(np.sum(lengths))
    fr = np.concatenate([[0.0], np.cumsum(lengths) / total])
    nodes, weights = GAUSS16
    energy = 0.0
    for k in range(len(D)):
        dtau = fr[k + 1] - fr[k]
        if dtau <= 0:
            continue
        for sk, wk in zip(nodes, weights):
            tau = fr[k] + sk * dtau
            tt = (1 - tau) * t + tau * s
            m = flow.metric_at(tt)
            X = path_pts[k] + sk * D[k]
            F2 = float(_f2_at(m, X, D[k] / dtau))
            energy += wk * dtau * F2 / float(bounds.beta(tt))
    return energy


def _f2_at(metric, X, V):
    from .metric import f2_values

    return f2_values(metric, metric.param_values(X[None]), V[None])[0]


def verify_harnack_flow(flow, heat: HeatTrajectory, bounds: FlowBoundSet, quadruples, *, constants=None,
                        c_disc=None) -> EstimateReport:
    """ln u(s,x) - ln u(t,y) - A - B/(4(t-s)) - (t-s) sqrt(2 n C3) for each quadruple.

    B is bounded above by the cheapest candidate path from y to x: straight
    segments over lattice images and grid-graph paths of the metrics at s
    and t. For a stationary flow B = d^2 int_0^1 d tau / beta exactly.
    """
    grid = heat.grid
    n = grid.n
    consts = flow_constants(flow) if constants is None else dict(constants)
    budget = _harnack_budget(heat, c_disc)
    rows, worst, where = [], -np.inf, None
    for i, xi, j, yi in quadruples:
        s, t = float(heat.t[i]), float(heat.t[j])
        x, y = grid.point(xi), grid.point(yi)
        A = _integral(lambda r: float(flow_rhs(bounds, consts, n, r, with_c3=False)), s, t)
        if tuple(xi) == tuple(yi):
            B = 0.0
        elif flow.stationary:
            d = effective_distance(flow.metrics[0], grid, y, x)
            B = d**2 * (t - s) ** -1 * _integral(lambda r: 1.0 / float(bounds.beta(r)), s, t)
        else:
            B = _candidate_energy(flow, grid, x, y, s, t, bounds)
        lhs = math.log(heat.u[i][tuple(xi)])
        rhs = math.log(heat.u[j][tuple(yi)]) + A + B / (4 * (t - s)) + (t - s) * math.sqrt(2 * n * consts["C3"])
        m = lhs - rhs
        rows.append((s, t, x.tolist(), y.tolist(), B, m))
        if m > worst:
            worst, where = m, (s, *x.tolist(), t, *y.tolist())
    return EstimateReport("harnack-flow", float(worst), where, budget, worst <= budget, None,
                          {**consts, **bounds.describe()}, rows, {"samples": len(rows)})


def _candidate_energy(flow, grid, x, y, s, t, bounds):
    candidates = []
    _, D = segment_distance(flow.metric_at(t), grid.L, y, x)
    candidates.append(np.stack([y, y + D]))
    for tm in (s, t):
        pts = distance_graph(flow.metric_at(tm), grid).path(y, x)
        candidates.append(pts)
    return min(_path_energy(flow, c, s, t, bounds) for c in candidates)


# ---------------------------------------------------------------------------
# Gaussian sharpness


def gaussian_sharpness(traj: HeatTrajectory, k: int | None = None) -> dict:
    """sup over nodes of (F(grad f)^2 - d_t f) 2t/n at stored step ``k`` (default: last interior step).

    Times are measured from the start of the trajectory; the heat kernel
    equality value of the ratio is 1.
    """
    k = len(traj) - 2 if k is None else k
    d = log_derivatives(traj, k)
    t = float(traj.t[k] - traj.t[0])
    q = (d.F2.values - d.ft.values) * 2 * t / traj.grid.n
    i = np.unravel_index(int(np.argmax(q)), traj.grid.shape)
    return {"t": t, "sup_ratio": float(q[i]), "location": traj.grid.point(i).tolist()}
