"""Spray, Ricci curvature, distortion, S-curvature and weighted Ricci curvature.

Ricci curvature is the trace of the spray curvature ``R^i_k`` divided by
F^2; the Ricci tensor is half the y-Hessian of that trace. x-derivatives are
central differences of step ``h`` (the grid spacing for node samples).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from . import _kernels as K
from .errors import DomainError, NumericalError, UnsupportedFamilyError
from .fields import AnalyticField, ConstantField, ParamField, as_field
from .grid import TorusGrid
from .metric import FinslerStructure, _batch, _require_nonzero, f2_values, g_values

DEFAULT_STEP = 1e-3
S_ZERO = 1e-8
GEODESIC_STEPS = 5


@dataclass(frozen=True, eq=False)
class MeasureField:
    """Smooth measure d mu = sigma(x) dx with a descriptive tag."""

    density: ParamField
    tag: str = "custom"

    def __call__(self, X) -> np.ndarray:
        return np.asarray(self.density(X), dtype=float)

    def on_grid(self, grid: TorusGrid) -> np.ndarray:
        sigma = np.asarray(self.density.on_grid(grid), dtype=float)
        if np.min(sigma) <= 0:
            raise DomainError("measure density must be positive")
        return sigma


def lebesgue() -> MeasureField:
    return MeasureField(ConstantField(1.0), "lebesgue")


def custom_measure(density) -> MeasureField:
    return MeasureField(as_field(density), "custom")


def riemannian_volume(metric: FinslerStructure) -> MeasureField:
    """sqrt(det) of the metric's Riemannian part: g, the Randers ``a``, or e^(2 phi) I."""
    if metric.family == "euclidean":
        return MeasureField(ConstantField(1.0), "riemannian-volume")
    n = metric.n

    def density(X):
        params = metric.param_values(X)
        if metric.family == "conformal":
            return np.exp(n * params["phi"])
        form = params["g"] if metric.family == "riemannian" else params["a"]
        return np.sqrt(np.linalg.det(form))

    return MeasureField(AnalyticField(density), "riemannian-volume")


# ---------------------------------------------------------------------------
# sampling helpers


def _patch_for(metric, x2, h, offsets, grid=None):
    if grid is not None:
        return metric.node_patch(grid, offsets)
    return metric.point_patch(x2, h, offsets)


def spray_values(metric, X, V, h) -> np.ndarray:
    """Spray coefficients at arbitrary points (batched, no validation)."""
    P = metric.point_patch(X, h, K.star(metric.n))
    return np.asarray(K.batched_spray(metric.family, metric.n)(P, V, h))


def spray_coefficients(metric: FinslerStructure, x, y, h: float = DEFAULT_STEP):
    """G^k(x, y) with geodesics solving x'' + 2 G(x, x') = 0."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    G = spray_values(metric, x2, y2, h)
    return G[0] if single else G


def _ricci_trace_points(metric, x2, y2, h):
    P = metric.point_patch(x2, h, K.block(metric.n))
    return np.asarray(K.batched_ricci_trace(metric.family, metric.n)(P, y2, h))


def ricci_scalar(metric: FinslerStructure, x, y, h: float = DEFAULT_STEP):
    """Ric(y): trace of the spray curvature over F^2 (0-homogeneous in y)."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    tr = _ricci_trace_points(metric, x2, y2, h)
    ric = tr / f2_values(metric, metric.param_values(x2), y2)
    return float(ric[0]) if single else ric


def ricci_tensor(metric: FinslerStructure, x, y, h: float = DEFAULT_STEP):
    """Ric_ij = 1/2 d^2 (F^2 Ric) / dy^i dy^j."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    P = metric.point_patch(x2, h, K.block(metric.n))
    T = np.asarray(K.batched_ricci_tensor(metric.family, metric.n)(P, y2, h))
    return T[0] if single else T


def node_ricci(metric, grid: TorusGrid, Y, *, tensor=True):
    """Ricci scalar (and tensor) at every node for per-node directions ``Y`` (N, n) or (N, D, n)."""
    Y = np.asarray(Y, dtype=float)
    D = 1 if Y.ndim == 2 else Y.shape[1]
    Yf = Y.reshape(-1, metric.n)
    patch = metric.node_patch(grid, K.block(metric.n))
    if D > 1:
        patch = {k: np.repeat(v, D, axis=0) for k, v in patch.items()}
    params = {k: v[:, 0] for k, v in patch.items()}
    F2 = f2_values(metric, params, Yf)
    tr = np.asarray(K.batched_ricci_trace(metric.family, metric.n)(patch, Yf, grid.h))
    ric = tr / F2
    T = np.asarray(K.batched_ricci_tensor(metric.family, metric.n)(patch, Yf, grid.h)) if tensor else None
    if D > 1:
        ric = ric.reshape(-1, D)
        T = None if T is None else T.reshape(-1, D, metric.n, metric.n)
    return ric, T


# ---------------------------------------------------------------------------
# distortion and S-curvature


def _distortion_values(metric, measure, X, Y):
    params = metric.param_values(X)
    g = g_values(metric, params, Y)
    sigma = measure(X)
    return 0.5 * np.log(np.linalg.det(g)) - np.log(sigma)


def distortion(metric: FinslerStructure, measure: MeasureField, x, y):
    """tau(x, y) = ln(sqrt(det g_ij(x, y)) / sigma(x))."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    tau = _distortion_values(metric, measure, x2, y2)
    return float(tau[0]) if single else tau


def geodesic_rk4(metric, X, V, dt, steps, h):
    """Integrate x'' = -2 G(x, x') with classical RK4; returns (steps+1, P, n) positions and velocities."""
    X = np.array(X, dtype=float)
    V = np.array(V, dtype=float)
    dt = np.broadcast_to(np.asarray(dt, dtype=float), X.shape[:1])[:, None]
    xs, vs = [X.copy()], [V.copy()]

    def accel(x, v):
        return -2.0 * spray_values(metric, x, v, h)

    for _ in range(steps):
        k1x, k1v = V, accel(X, V)
        k2x, k2v = V + 0.5 * dt * k1v, accel(X + 0.5 * dt * k1x, V + 0.5 * dt * k1v)
        k3x, k3v = V + 0.5 * dt * k2v, accel(X + 0.5 * dt * k2x, V + 0.5 * dt * k2v)
        k4x, k4v = V + dt * k3v, accel(X + dt * k3x, V + dt * k3v)
        X = X + dt / 6.0 * (k1x + 2 * k2x + 2 * k3x + k4x)
        V = V + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(V))):
            raise NumericalError("geodesic integration produced non-finite values")
        xs.append(X.copy())
        vs.append(V.copy())
    return np.stack(xs), np.stack(vs)


def _s_curvature_values(metric, measure, x2, y2, h):
    F = np.sqrt(f2_values(metric, metric.param_values(x2), y2))
    delta = 1e-3 * h / F
    fx, fv = geodesic_rk4(metric, x2, y2, delta, GEODESIC_STEPS, h)
    bx, bv = geodesic_rk4(metric, x2, y2, -delta, GEODESIC_STEPS, h)
    tau0 = _distortion_values(metric, measure, x2, y2)
    tau_f = _distortion_values(metric, measure, fx[-1], fv[-1])
    tau_b = _distortion_values(metric, measure, bx[-1], bv[-1])
    span = GEODESIC_STEPS * delta
    S = (tau_f - tau_b) / (2.0 * span)
    Sdot = (tau_f - 2.0 * tau0 + tau_b) / span**2 / F**2
    return S, Sdot, F


def s_curvature(metric: FinslerStructure, measure: MeasureField, x, y, h: float = DEFAULT_STEP):
    """(S, S-dot): first and F^-2-scaled second derivative of tau along the geodesic through (x, y)."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    S, Sdot, _ = _s_curvature_values(metric, measure, x2, y2, h)
    return (float(S[0]), float(Sdot[0])) if single else (S, Sdot)


def combine_weighted(ric, S, Sdot, F, N, n):
    """Ric_N from its ingredients; the N = n branch returns -inf where S does not vanish."""
    if N < n:
        raise DomainError(f"weighted Ricci curvature needs N >= n = {n}, got {N}")
    ric = np.asarray(ric, dtype=float)
    if math.isinf(N):
        return ric + Sdot
    if N == n:
        return np.where(np.abs(S) > S_ZERO * F, -np.inf, ric + Sdot)
    return ric + Sdot - S**2 / ((N - n) * F**2)


def weighted_ricci(metric: FinslerStructure, measure: MeasureField, N, x, y, h: float = DEFAULT_STEP):
    """Ric_N(y) = Ric + S-dot - S^2 / ((N - n) F^2), 0-homogeneous in y."""
    if N < metric.n:
        raise DomainError(f"weighted Ricci curvature needs N >= n = {metric.n}, got {N}")
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    ric = _ricci_trace_points(metric, x2, y2, h) / f2_values(metric, metric.param_values(x2), y2)
    S, Sdot, F = _s_curvature_values(metric, measure, x2, y2, h)
    out = combine_weighted(ric, S, Sdot, F, N, metric.n)
    return float(out[0]) if single else out


# ---------------------------------------------------------------------------
# sampled tables and bounds


def unit_directions(n: int, count: int = 16) -> np.ndarray:
    """Fixed Euclidean-unit direction quadrature: ``count`` angles in 2-D, 26 stencil directions in 3-D."""
    if n == 2:
        theta = 2.0 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    dirs = np.array([d for d in product((-1, 0, 1), repeat=3) if any(d)], dtype=float)
    return dirs / np.linalg.norm(dirs, axis=-1, keepdims=True)


def gen_eigvalsh(A, g):
    """Eigenvalues of the form A in a g-orthonormal frame."""
    w, U = np.linalg.eigh(g)
    root_inv = U @ (np.swapaxes(U, -1, -2) / np.sqrt(w)[..., :, None])
    return np.linalg.eigvalsh(root_inv @ A @ np.swapaxes(root_inv, -1, -2))


@dataclass
class CurvatureTable:
    """Curvature sampled at nodes x directions (flattened, one row per sample)."""

    x: np.ndarray
    y: np.ndarray
    F: np.ndarray
    ric: np.ndarray
    S: np.ndarray
    Sdot: np.ndarray
    ricN: np.ndarray
    lam_min: np.ndarray
    lam_max: np.ndarray
    N: float

    columns = ("F", "Ric", "S", "Sdot", "RicN", "lambda_min_Ricij", "lambda_max_Ricij")

    def rows(self):
        cols = [self.F, self.ric, self.S, self.Sdot, self.ricN, self.lam_min, self.lam_max]
        for i in range(len(self.F)):
            yield list(self.x[i]) + list(self.y[i]) + [c[i] for c in cols]


def sample_curvature(metric, measure, grid: TorusGrid, N, directions=None) -> CurvatureTable:
    """Evaluate Ric, Ric_ij, S, S-dot and Ric_N on every node x direction."""
    n = metric.n
    dirs = unit_directions(n) if directions is None else np.asarray(directions, dtype=float)
    D = len(dirs)
    nodes = grid.nodes()
    X = np.repeat(nodes, D, axis=0)
    Y = np.tile(dirs, (grid.size, 1))
    ric, T = node_ricci(metric, grid, np.broadcast_to(dirs, (grid.size, D, n)))
    ric = ric.reshape(-1)
    T = T.reshape(-1, n, n)
    g = g_values(metric, metric.param_values(X), Y)
    lam = gen_eigvalsh(0.5 * (T + np.swapaxes(T, -1, -2)), g)
    S, Sdot, F = _s_curvature_values(metric, measure, X, Y, grid.h)
    ricN = combine_weighted(ric, S, Sdot, F, N, n)
    return CurvatureTable(X, Y, F, ric, S, Sdot, ricN, lam[:, 0], lam[:, -1], N)


@dataclass
class CurvatureBounds:
    """Sampled curvature constants; ``where`` maps each constant to its achieving (x, y)."""

    K: float
    K1: float
    K2: float
    K3: float | None
    K4: float | None
    N: float
    n_samples: int
    where: dict = field(default_factory=dict)
    note: str = ""

    def as_dict(self):
        return {k: getattr(self, k) for k in ("K", "K1", "K2", "K3", "K4", "N", "n_samples")} | {"note": self.note}


def isotropic_decomposition(metric, measure, grid: TorusGrid, s_table=None):
    """Realize S = sigma F + d phi with sigma = 0 where that is exact.

    Returns ``(phi, K3, K4, where)`` with ``phi`` the node values of the
    distortion (y-independent case) or zeros (vanishing S-curvature).
    Raises :class:`UnsupportedFamilyError` when the distortion depends on y
    and the S-curvature does not vanish.
    """
    n = metric.n
    if s_table is not None and np.all(np.abs(s_table.S) <= S_ZERO * np.maximum(s_table.F, 1.0)):
        return np.zeros(grid.shape), 0.0, 0.0, {}
    if metric.is_flat:
        # straight geodesics keep y fixed, so only -ln sigma contributes to S
        phi = -np.log(np.broadcast_to(measure.on_grid(grid), grid.shape))
        if np.all(phi == phi.flat[0]):
            return np.zeros(grid.shape), 0.0, 0.0, {}
        d = [grid.diff(phi, i) for i in range(n)]
        hess = np.stack([np.stack([grid.diff(d[j], i) for j in range(n)], axis=-1) for i in range(n)], axis=-2)
        hess = hess.reshape(grid.size, n, n)
        params = metric.node_params(grid)
        worst, arg = np.inf, 0
        for y in unit_directions(n):
            Y = np.broadcast_to(y, (grid.size, n))
            q = np.einsum("pij,i,j->p", hess, y, y) / f2_values(metric, params, Y)
            if np.min(q) < worst:
                worst, arg = float(np.min(q)), int(np.argmin(q))
        return phi - phi.flat[0], 0.0, max(0.0, -worst), {"K4": grid.nodes()[arg].tolist()}
    if metric.family == "randers":
        raise UnsupportedFamilyError("distortion of a non-flat Randers metric depends on direction; no isotropic decomposition")
    nodes = grid.nodes()
    e1 = np.tile(np.eye(n)[0], (grid.size, 1))
    phi = _distortion_values(metric, measure, nodes, e1).reshape(grid.shape)
    hess = riemannian_hessian(metric, grid, phi)
    g = g_values(metric, metric.node_params(grid), e1)
    lam = gen_eigvalsh(hess, g)[:, 0]
    k4 = max(0.0, -float(np.min(lam)))
    where = {"K4": nodes[int(np.argmin(lam))].tolist()}
    return phi, 0.0, k4, where


def riemannian_hessian(metric, grid: TorusGrid, values) -> np.ndarray:
    """Covariant Hessian D_i D_j phi - Gamma^k_ij d_k phi of a node field for a y-independent metric."""
    n = metric.n
    d = [grid.diff(values, i) for i in range(n)]
    dd = np.stack([np.stack([grid.diff(d[j], i) for j in range(n)], axis=-1) for i in range(n)], axis=-2)
    dd = dd.reshape(grid.size, n, n)
    du = np.stack(d, axis=-1).reshape(grid.size, n)
    e1 = np.tile(np.eye(n)[0], (grid.size, 1))
    patch = metric.node_patch(grid, K.star(n))
    gam = np.asarray(K.batched_christoffel(metric.family, n)(patch, e1, grid.h))  # [l, i, j]
    ginv = np.linalg.inv(g_values(metric, metric.node_params(grid), e1))
    gamma_up = np.einsum("pkl,plij->pkij", ginv, gam)
    return dd - np.einsum("pkij,pk->pij", gamma_up, du)


def curvature_bounds(metric, measure, grid: TorusGrid, N, directions=None, table=None) -> CurvatureBounds:
    """K = min Ric_N, K1/K2 from the Ricci-tensor spectrum, K3/K4 from the isotropic decomposition."""
    tab = sample_curvature(metric, measure, grid, N, directions) if table is None else table
    if len(tab.F) == 0:
        raise DomainError("empty sample set")
    iK = int(np.argmin(tab.ricN))
    i1 = int(np.argmin(tab.lam_min))
    i2 = int(np.argmax(tab.lam_max))
    where = {
        "K": (tab.x[iK].tolist(), tab.y[iK].tolist()),
        "K1": (tab.x[i1].tolist(), tab.y[i1].tolist()),
        "K2": (tab.x[i2].tolist(), tab.y[i2].tolist()),
    }
    note = ""
    try:
        _, k3, k4, w = isotropic_decomposition(metric, measure, grid, tab)
        where.update(w)
    except UnsupportedFamilyError as exc:
        k3 = k4 = None
        note = str(exc)
    return CurvatureBounds(
        K=float(tab.ricN[iK]),
        K1=max(0.0, -float(tab.lam_min[i1])),
        K2=max(0.0, float(tab.lam_max[i2])),
        K3=k3,
        K4=k4,
        N=N,
        n_samples=len(tab.F),
        where=where,
        note=note,
    )
