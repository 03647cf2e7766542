"""Ricci flow dg/dt = -2 Ric_ij on flow-closed metric families, and heat coupled to it."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import metric as M
from .calculus import EPS_MASK, _gradient_values
from .curvature import CurvatureBounds, MeasureField, gen_eigvalsh, isotropic_decomposition, node_ricci, unit_directions
from .errors import ConfigurationError, DomainError, StabilityError, UnsupportedFamilyError
from .fields import GridField
from .grid import ScalarField, TorusGrid
from .heat import HeatTrajectory, integrate_heat, max_inverse_eigenvalue
from .metric import FinslerStructure, f2_values, g_values

FLOW_CFL = 0.1


def flow_limit(metric: FinslerStructure, grid: TorusGrid) -> float:
    """Largest admissible flow step, 0.1 h^2 / lambda_max(g^-1)."""
    return FLOW_CFL * grid.h**2 / max_inverse_eigenvalue(metric, grid)


def _node_tensor(metric, grid):
    e1 = np.tile(np.eye(grid.n)[0], (grid.size, 1))
    return g_values(metric, metric.node_params(grid), e1)


def _ricci_nodes(metric, grid):
    e1 = np.tile(np.eye(grid.n)[0], (grid.size, 1))
    ric, T = node_ricci(metric, grid, e1)
    return ric, 0.5 * (T + np.swapaxes(T, -1, -2))


def flow_step(metric: FinslerStructure, grid: TorusGrid, dt_flow: float) -> FinslerStructure:
    """One forward-Euler step of dg_ij/dt = -2 Ric_ij.

    Flat metrics are returned unchanged (the same object). Riemannian
    metrics update the node tensor field; 2-D conformal metrics update phi
    by ``-dt * Ric``, which is the same tensor update restricted to the
    conformal class.
    """
    if metric.is_flat:
        return metric
    if metric.family == "riemannian":
        _, ric = _ricci_nodes(metric, grid)
        g = metric.node_params(grid)["g"] - 2.0 * dt_flow * ric
        if np.min(np.linalg.eigvalsh(g)) <= 0:
            raise StabilityError("Ricci flow lost positive definiteness", location=None)
        return M.riemannian(GridField(grid, g.reshape(grid.shape + (grid.n, grid.n))))
    if metric.family == "conformal" and grid.n == 2:
        ric, _ = _ricci_nodes(metric, grid)
        phi = metric.node_params(grid)["phi"] - dt_flow * ric
        return M.conformal(GridField(grid, phi.reshape(grid.shape)), 2)
    raise UnsupportedFamilyError(
        f"the {metric.family} family (n = {grid.n}) is not closed under Ricci flow unless it is flat"
    )


def _interpolate(a: FinslerStructure, b: FinslerStructure, w: float, grid: TorusGrid) -> FinslerStructure:
    """Linear interpolation in g_ij between two snapshots."""
    if a is b or w == 0.0:
        return a
    if w == 1.0:
        return b
    if a.family == "riemannian":
        g = (1 - w) * a.node_params(grid)["g"] + w * b.node_params(grid)["g"]
        return M.riemannian(GridField(grid, g.reshape(grid.shape + (grid.n, grid.n))))
    if a.family == "conformal":
        pa, pb = a.node_params(grid)["phi"], b.node_params(grid)["phi"]
        phi = 0.5 * np.log((1 - w) * np.exp(2 * pa) + w * np.exp(2 * pb))
        return M.conformal(GridField(grid, phi.reshape(grid.shape)), grid.n)
    raise UnsupportedFamilyError(f"cannot interpolate {a.family} snapshots")


@dataclass
class FlowTrajectory:
    """Metric snapshots ``metrics[k]`` at ``t[k] = k * dt_flow`` with per-step bounds."""

    grid: TorusGrid
    t: np.ndarray
    metrics: list
    dt_flow: float
    measure: MeasureField
    bounds: list
    _interp: dict = field(default_factory=dict, repr=False)

    @property
    def stationary(self) -> bool:
        return all(m is self.metrics[0] for m in self.metrics)

    def metric_at(self, t: float) -> FinslerStructure:
        """Snapshot at ``t``, linearly interpolated in g_ij between flow steps."""
        if self.stationary:
            return self.metrics[0]
        s = (t - self.t[0]) / self.dt_flow
        k = int(np.clip(np.floor(s + 1e-9), 0, len(self.metrics) - 1))
        w = float(s - k)
        if k == len(self.metrics) - 1 or abs(w) < 1e-9:
            return self.metrics[k]
        key = (k, round(w, 12))
        if key not in self._interp:
            if len(self._interp) > 16:
                self._interp.clear()
            self._interp[key] = _interpolate(self.metrics[k], self.metrics[k + 1], w, self.grid)
        return self._interp[key]

    def bounds_table(self):
        return [(float(t), b.K1, b.K2, b.K3, b.K4) for t, b in zip(self.t, self.bounds)]


def step_bounds(metric: FinslerStructure, measure: MeasureField, grid: TorusGrid) -> CurvatureBounds:
    """K1, K2 from the Ricci-tensor spectrum and K3, K4 from the isotropic decomposition.

    Ric_ij is direction-independent for Riemannian-type families, so one
    reference direction is exact there; other families use the quadrature.
    Flat metrics get K = K1 = K2 = 0 exactly.
    """
    n = grid.n
    if metric.is_flat:
        _, k3, k4, where = isotropic_decomposition(metric, measure, grid)
        return CurvatureBounds(K=0.0, K1=0.0, K2=0.0, K3=k3, K4=k4, N=float("inf"), n_samples=0,
                               where=where, note="flat metric: Ricci curvature vanishes identically")
    if metric.family in ("riemannian", "conformal", "euclidean"):
        dirs = np.eye(n)[:1]
    else:
        dirs = unit_directions(n)
    D = len(dirs)
    ric, T = node_ricci(metric, grid, np.broadcast_to(dirs, (grid.size, D, n)))
    T = T.reshape(-1, n, n)
    Y = np.tile(dirs, (grid.size, 1))
    X = np.repeat(grid.nodes(), D, axis=0)
    g = g_values(metric, metric.param_values(X), Y)
    lam = gen_eigvalsh(0.5 * (T + np.swapaxes(T, -1, -2)), g)
    try:
        _, k3, k4, where = isotropic_decomposition(metric, measure, grid)
        note = ""
    except UnsupportedFamilyError as exc:
        k3 = k4 = None
        where, note = {}, str(exc)
    return CurvatureBounds(
        K=float(np.min(ric)),
        K1=max(0.0, -float(np.min(lam[:, 0]))),
        K2=max(0.0, float(np.max(lam[:, -1]))),
        K3=k3,
        K4=k4,
        N=float("inf"),
        n_samples=len(Y),
        where=where,
        note=note,
    )


def solve_flow(metric0: FinslerStructure, grid: TorusGrid, measure: MeasureField, dt_flow: float, steps: int) -> FlowTrajectory:
    """Run ``steps`` flow steps; the measure stays fixed at its initial value."""
    if steps < 0:
        raise ConfigurationError("flow steps must be nonnegative")
    if not metric0.is_flat:
        limit = flow_limit(metric0, grid)
        if dt_flow > limit * (1 + 1e-12):
            raise ConfigurationError(f"dt_flow = {dt_flow:.4e} exceeds 0.1 h^2 / lambda_max = {limit:.4e}")
    metrics = [metric0]
    for _ in range(steps):
        metrics.append(flow_step(metrics[-1], grid, dt_flow))
    bounds = []
    for m in metrics:
        if bounds and m is metrics[0]:
            bounds.append(bounds[0])
        else:
            bounds.append(step_bounds(m, measure, grid))
    return FlowTrajectory(grid, dt_flow * np.arange(steps + 1), metrics, dt_flow, measure, bounds)


def solve_heat_under_flow(flow: FlowTrajectory, u0: ScalarField, dt: float, *, t_end=None, stride: int = 1,
                          allow_small: bool = False) -> HeatTrajectory:
    """Heat equation with Delta taken for F_t at every RK stage."""
    ratio = flow.dt_flow / dt
    if not flow.stationary and abs(ratio - round(ratio)) > 1e-9:
        raise ConfigurationError(f"dt_flow = {flow.dt_flow} must be an integer multiple of dt = {dt}")
    if u0.t != flow.t[0]:
        raise ConfigurationError("heat and flow must start at the same time")
    t_end = float(flow.t[-1]) if t_end is None else t_end
    cfl = [flow.metrics[0]] if flow.stationary else flow.metrics
    return integrate_heat(flow.metric_at, flow.measure, u0, t_end, dt, stride=stride,
                          allow_small=allow_small, cfl_metrics=cfl)


def evolution_identity_residual(flow: FlowTrajectory, heat: HeatTrajectory, k: int) -> ScalarField:
    """d_t F_t(nabla f)^2 - 2 d(d_t f)(nabla f) - 2 Ric^{ij}(nabla f) f_i f_j at stored step ``k``.

    Each term is computed on its own: the left side by centered differences
    of F_t(nabla_t f)^2 with the metric at each time.
    """
    if k < 1 or k > len(heat) - 2:
        raise DomainError(f"need an interior step, got {k}")
    grid = heat.grid
    n = grid.n

    def grad_sq(j):
        f = np.log(heat.u[j])
        m = flow.metric_at(float(heat.t[j]))
        du = np.stack([grid.diff(f, i) for i in range(n)], axis=-1).reshape(-1, n)
        V = _gradient_values(m, grid, du)
        return f2_values(m, m.node_params(grid), V), du, V, m

    Fm, _, _, _ = grad_sq(k - 1)
    Fp, _, _, _ = grad_sq(k + 1)
    _, du, V, m = grad_sq(k)
    span = heat.t[k + 1] - heat.t[k - 1]
    lhs = (Fp - Fm) / span
    ft = (np.log(heat.u[k + 1]) - np.log(heat.u[k - 1])) / span
    dft = np.stack([grid.diff(ft, i) for i in range(n)], axis=-1).reshape(-1, n)
    mask = np.linalg.norm(du, axis=-1) >= EPS_MASK
    ref = np.where(mask[:, None], V, np.eye(n)[0])
    _, T = node_ricci(m, grid, ref)
    ginv = np.linalg.inv(g_values(m, m.node_params(grid), ref))
    ric_up = ginv @ (0.5 * (T + np.swapaxes(T, -1, -2))) @ ginv
    ric_term = np.einsum("pij,pi,pj->p", ric_up, du, du)
    resid = lhs - 2.0 * np.einsum("pi,pi->p", dft, V) - 2.0 * ric_term
    vals = np.where(mask, resid, np.nan).reshape(grid.shape)
    return ScalarField(grid, vals, float(heat.t[k]), mask=mask.reshape(grid.shape))


@dataclass
class IsotropicData:
    """S = sigma F + d phi with sigma = 0 at one flow step."""

    phi: ScalarField
    K3: float
    K4: float
    where: dict


def isotropic_s_data(flow: FlowTrajectory, measure: MeasureField, k: int) -> IsotropicData:
    m = flow.metrics[k]
    phi, k3, k4, where = isotropic_decomposition(m, measure, flow.grid)
    return IsotropicData(ScalarField(flow.grid, phi, float(flow.t[k])), k3, k4, where)
