"""Explicit RK4 solver for the Finsler heat equation du/dt = div_mu(nabla u)."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .calculus import EPS_MASK, _gradient_values, _sigma
from .errors import ConfigurationError, DomainError, StabilityError
from .grid import ScalarField, TorusGrid
from .metric import FinslerStructure, f2_values, g_values
from .curvature import MeasureField, unit_directions

CFL_FACTOR = 0.2
MIN_RATIO = 0.1


def max_inverse_eigenvalue(metric: FinslerStructure, grid: TorusGrid, directions=None) -> float:
    """Largest eigenvalue of g^{-1}(x, y) over nodes x and a direction quadrature y."""
    dirs = unit_directions(grid.n) if directions is None else np.asarray(directions, dtype=float)
    params = metric.node_params(grid)
    worst = 0.0
    for d in dirs:
        g = g_values(metric, params, np.broadcast_to(d, (grid.size, grid.n)))
        worst = max(worst, float(np.max(1.0 / np.linalg.eigvalsh(g)[:, 0])))
    return worst


def cfl_limit(metric: FinslerStructure, grid: TorusGrid) -> float:
    return CFL_FACTOR * grid.h**2 / max_inverse_eigenvalue(metric, grid)


def _rhs(metric, grid, sigma, u):
    du = np.stack([grid.diff(u, i) for i in range(grid.n)], axis=-1).reshape(-1, grid.n)
    V = _gradient_values(metric, grid, du).reshape(grid.shape + (grid.n,))
    return sum(grid.diff(sigma * V[..., i], i) for i in range(grid.n)) / sigma


@dataclass
class HeatTrajectory:
    """Stored solution snapshots ``u[k]`` at times ``t[k]``.

    ``metric_at(t)`` returns the metric used at time ``t`` (constant for a
    static solve).
    """

    grid: TorusGrid
    t: np.ndarray
    u: list
    dt: float
    stride: int
    metric_at: Callable
    measure: MeasureField
    _cache: dict = field(default_factory=dict, repr=False)

    def __len__(self):
        return len(self.u)

    @property
    def sigma(self) -> np.ndarray:
        if "sigma" not in self._cache:
            self._cache["sigma"] = np.broadcast_to(_sigma(self.measure, self.grid), self.grid.shape)
        return self._cache["sigma"]

    def field(self, k: int) -> ScalarField:
        return ScalarField(self.grid, self.u[k], float(self.t[k]))

    def mass(self, k: int) -> float:
        return self.grid.integrate(self.u[k], self.sigma)


def _validate_initial(u0, allow_small: bool):
    vals = u0.values
    if not np.all(np.isfinite(vals)):
        raise DomainError("initial data must be finite")
    if np.min(vals) <= 0:
        raise DomainError("initial data must be positive")
    if not allow_small and np.min(vals) < MIN_RATIO * np.max(vals):
        raise DomainError(
            f"min u0 = {np.min(vals):.3e} is below {MIN_RATIO} * max u0; pass allow_small=True to override"
        )


def integrate_heat(metric_at, measure, u0: ScalarField, t_end: float, dt: float, *, stride: int = 1,
                   allow_small: bool = False, cfl_metrics=None) -> HeatTrajectory:
    """RK4 time stepping with the metric ``metric_at(t)`` evaluated at each stage time."""
    grid = u0.grid
    _validate_initial(u0, allow_small)
    if not dt > 0 or not t_end > u0.t:
        raise ConfigurationError("need dt > 0 and t_end > t0")
    if stride < 1:
        raise ConfigurationError("stride must be a positive integer")
    for m in cfl_metrics if cfl_metrics is not None else [metric_at(u0.t)]:
        limit = cfl_limit(m, grid)
        if dt > limit * (1 + 1e-12):
            raise ConfigurationError(f"dt = {dt:.4e} exceeds the CFL limit 0.2 h^2 / lambda_max = {limit:.4e}")
    sigma = np.broadcast_to(_sigma(measure, grid), grid.shape)
    steps = int(round((t_end - u0.t) / dt))
    if abs(u0.t + steps * dt - t_end) > 1e-9 * max(1.0, abs(t_end)):
        raise ConfigurationError(f"t_end - t0 = {t_end - u0.t} is not a multiple of dt = {dt}")
    u = np.array(u0.values, dtype=float)
    times, snaps = [u0.t], [u.copy()]
    t0 = u0.t
    for k in range(steps):
        t = t0 + k * dt
        mid = metric_at(t + 0.5 * dt)
        k1 = _rhs(metric_at(t), grid, sigma, u)
        k2 = _rhs(mid, grid, sigma, u + 0.5 * dt * k1)
        k3 = _rhs(mid, grid, sigma, u + 0.5 * dt * k2)
        k4 = _rhs(metric_at(t + dt), grid, sigma, u + dt * k3)
        u = u + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not np.all(u > 0) or not np.all(np.isfinite(u)):
            bad = np.unravel_index(int(np.argmin(np.where(np.isfinite(u), u, -np.inf))), grid.shape)
            x = grid.point(bad)
            raise StabilityError(f"positivity lost at t = {t + dt:.6g}, x = {x.tolist()}", t=t + dt, location=x)
        if (k + 1) % stride == 0 or k + 1 == steps:
            times.append(t0 + (k + 1) * dt)
            snaps.append(u.copy())
    return HeatTrajectory(grid, np.array(times), snaps, dt, stride, metric_at, measure)


def solve_heat(metric: FinslerStructure, measure: MeasureField, u0: ScalarField, t_end: float, dt: float, *,
               stride: int = 1, allow_small: bool = False) -> HeatTrajectory:
    """Solve du/dt = Delta u from ``u0`` (at time ``u0.t``) to ``t_end`` on a static metric."""
    return integrate_heat(lambda t: metric, measure, u0, t_end, dt, stride=stride, allow_small=allow_small)


@dataclass
class LogDerivatives:
    """f = ln u and derived fields at one stored step."""

    f: ScalarField
    ft: ScalarField
    F2: ScalarField
    lap: ScalarField
    grad: np.ndarray
    residual: ScalarField
    mask: np.ndarray


def log_derivatives(traj: HeatTrajectory, k: int) -> LogDerivatives:
    """Spatial and centered-in-time derivatives of f = ln u at stored step ``k``.

    The residual of Delta f + F(nabla f)^2 = d_t f is reported as an
    independent diagnostic.
    """
    if k < 1 or k > len(traj) - 2:
        raise DomainError(f"centered time differences need 1 <= k <= {len(traj) - 2}, got {k}")
    grid = traj.grid
    t = float(traj.t[k])
    dt_m, dt_p = traj.t[k] - traj.t[k - 1], traj.t[k + 1] - traj.t[k]
    fm, f0, fp = (np.log(traj.u[j]) for j in (k - 1, k, k + 1))
    if np.isclose(dt_m, dt_p):
        ft = (fp - fm) / (dt_m + dt_p)
    else:
        ft = (dt_m**2 * fp - dt_p**2 * fm + (dt_p**2 - dt_m**2) * f0) / (dt_m * dt_p * (dt_m + dt_p))
    metric = traj.metric_at(t)
    du = np.stack([grid.diff(f0, i) for i in range(grid.n)], axis=-1).reshape(-1, grid.n)
    V = _gradient_values(metric, grid, du)
    F2 = f2_values(metric, metric.node_params(grid), V)
    sigma = traj.sigma
    Vg = V.reshape(grid.shape + (grid.n,))
    lap = sum(grid.diff(sigma * Vg[..., i], i) for i in range(grid.n)) / sigma
    F2 = F2.reshape(grid.shape)
    mask = (np.linalg.norm(du, axis=-1) >= EPS_MASK).reshape(grid.shape)
    return LogDerivatives(
        f=ScalarField(grid, f0, t),
        ft=ScalarField(grid, ft, t),
        F2=ScalarField(grid, F2, t),
        lap=ScalarField(grid, lap, t),
        grad=Vg,
        residual=ScalarField(grid, lap + F2 - ft, t),
        mask=mask,
    )


# ---------------------------------------------------------------------------
# initial-condition families


def constant_plus_mode(grid: TorusGrid, constant=2.0, amplitude=1.0, wavevector=None, phase=0.0) -> ScalarField:
    """u0 = c + a sin(2 pi <k, x> / L + phase)."""
    k = np.eye(grid.n)[0] if wavevector is None else np.asarray(wavevector, dtype=float)
    X = grid.coords()
    return ScalarField(grid, constant + amplitude * np.sin(2 * np.pi * (X @ k) / grid.L + phase))


def gaussian_bump(grid: TorusGrid, center=None, tau0=0.01, floor=0.0) -> ScalarField:
    """Periodized flat heat kernel at time ``tau0`` centered at ``center``, plus ``floor``."""
    c = np.full(grid.n, grid.L / 2) if center is None else np.asarray(center, dtype=float)
    X = grid.coords()
    total = np.zeros(grid.shape)
    for s in grid.lattice_shifts(2):
        r2 = np.sum((X - c - s) ** 2, axis=-1)
        total += np.exp(-r2 / (4 * tau0))
    return ScalarField(grid, floor + total / (4 * np.pi * tau0) ** (grid.n / 2))


def random_positive(grid: TorusGrid, seed: int = 0, modes: int = 3, amplitude=0.3, constant=1.0) -> ScalarField:
    """Constant plus a few random low Fourier modes; positive by construction when amplitude < constant."""
    rng = np.random.default_rng(seed)
    X = grid.coords()
    vals = np.full(grid.shape, float(constant))
    scale = amplitude / modes
    for _ in range(modes):
        k = rng.integers(-2, 3, size=grid.n)
        if not np.any(k):
            k[0] = 1
        vals += scale * rng.uniform(0.5, 1.0) * np.cos(2 * np.pi * (X @ k) / grid.L + rng.uniform(0, 2 * np.pi))
    return ScalarField(grid, vals)
