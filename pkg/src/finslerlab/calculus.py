"""Discrete Finsler differential operators on periodic grid fields.

All stencils are second-order central differences. The divergence is taken
in flux form ``(1/sigma) sum_i D_i(sigma V^i)``, so integrals of divergences
vanish to round-off.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as K
from .curvature import MeasureField, _s_curvature_values
from .errors import DomainError
from .grid import CovectorField, ScalarField, TorusGrid, VectorField
from .metric import FinslerStructure, f2_values, g_values, legendre_params

EPS_GRAD = 1e-10
EPS_MASK = 1e-6


def _as_values(u) -> np.ndarray:
    return u.values if isinstance(u, ScalarField) else np.asarray(u, dtype=float)


def differential(u: ScalarField) -> CovectorField:
    grid = u.grid
    comps = [grid.diff(u.values, i) for i in range(grid.n)]
    return CovectorField(grid, np.stack(comps, axis=-1), u.t)


def _gradient_values(metric, grid, du_flat):
    """Legendre transform of node covectors; tiny covectors map to zero."""
    xi = np.where((np.linalg.norm(du_flat, axis=-1) >= EPS_GRAD)[:, None], du_flat, 0.0)
    return legendre_params(metric, metric.node_params(grid), xi, label="node")


def gradient_field(metric: FinslerStructure, u: ScalarField) -> VectorField:
    """nabla u = L*(du) at every node."""
    du = differential(u)
    V = _gradient_values(metric, u.grid, du.flat())
    return VectorField(u.grid, V.reshape(du.values.shape), u.t)


def _sigma(measure: MeasureField | None, grid: TorusGrid) -> np.ndarray:
    if measure is None:
        return np.ones(grid.shape)
    return np.broadcast_to(measure.on_grid(grid), grid.shape)


def divergence(measure: MeasureField | None, V: VectorField) -> ScalarField:
    """div_mu V = (1/sigma) sum_i D_i(sigma V^i)."""
    grid = V.grid
    sigma = _sigma(measure, grid)
    total = sum(grid.diff(sigma * V.values[..., i], i) for i in range(grid.n))
    return ScalarField(grid, total / sigma, V.t)


def finsler_laplacian(metric: FinslerStructure, measure: MeasureField | None, u: ScalarField) -> ScalarField:
    """Delta u = div_mu(nabla u); nonlinear in u unless the metric is Riemannian."""
    return divergence(measure, gradient_field(metric, u))


def _inverse_tensor_at(metric, grid, V_flat):
    """g^{ij}(x, V) at nodes; zero rows of V get a placeholder direction."""
    nonzero = np.linalg.norm(V_flat, axis=-1) > 0
    ref = np.where(nonzero[:, None], V_flat, np.eye(grid.n)[0])
    ginv = np.linalg.inv(g_values(metric, metric.node_params(grid), ref))
    return ginv, nonzero


def weighted_gradient(metric: FinslerStructure, V: VectorField, u) -> VectorField:
    """nabla^V u = g^{ij}(V) d_j u on nodes where V != 0, zero elsewhere."""
    grid = V.grid
    vals = _as_values(u)
    du = np.stack([grid.diff(vals, i) for i in range(grid.n)], axis=-1).reshape(-1, grid.n)
    ginv, nonzero = _inverse_tensor_at(metric, grid, V.flat())
    W = np.einsum("pij,pj->pi", ginv, du) * nonzero[:, None]
    return VectorField(grid, W.reshape(grid.shape + (grid.n,)), V.t)


def weighted_laplacian(metric: FinslerStructure, measure: MeasureField | None, V: VectorField, u) -> ScalarField:
    """Delta^V u = div_mu(nabla^V u), linear in u for fixed V."""
    return divergence(measure, weighted_gradient(metric, V, u))


def _second_differences(grid: TorusGrid, vals) -> np.ndarray:
    """Node matrices of D_i D_j u: compact stencil on the diagonal, nested central differences off it."""
    n, h = grid.n, grid.h
    H = np.empty(grid.shape + (n, n))
    d = [grid.diff(vals, i) for i in range(n)]
    for i in range(n):
        H[..., i, i] = (np.roll(vals, -1, axis=i) - 2.0 * vals + np.roll(vals, 1, axis=i)) / h**2
        for j in range(i + 1, n):
            H[..., i, j] = H[..., j, i] = grid.diff(d[j], i)
    return H.reshape(grid.size, n, n)


def hessian_matrix(metric: FinslerStructure, u: ScalarField):
    """Hessian of u in coordinates, with the reference direction nabla u.

    Returns ``(H, g, mask)``: flattened node matrices, the fundamental tensor
    at nabla u, and the mask of nodes with ``|du| >= 1e-6``.
    """
    grid = u.grid
    du = differential(u).flat()
    mask = np.linalg.norm(du, axis=-1) >= EPS_MASK
    V = _gradient_values(metric, grid, du)
    ref = np.where(mask[:, None], V, np.eye(grid.n)[0])
    D2 = _second_differences(grid, u.values)
    patch = metric.node_patch(grid, K.star(grid.n))
    corr = np.asarray(K.batched_hessian_correction(metric.family, grid.n)(patch, ref, grid.h))
    g = g_values(metric, metric.node_params(grid), ref)
    return D2 - corr, g, mask


def hs_norm_sq(H, g) -> np.ndarray:
    """tr(g^-1 H g^-1 H): squared norm in a g-orthonormal frame."""
    ginv = np.linalg.inv(g)
    A = ginv @ H
    return np.einsum("pij,pji->p", A, A)


def hessian_norm(metric: FinslerStructure, u: ScalarField) -> ScalarField:
    """Squared Hilbert-Schmidt norm of the Hessian, masked (nan) where |du| < 1e-6."""
    H, g, mask = hessian_matrix(metric, u)
    vals = np.where(mask, hs_norm_sq(H, g), np.nan)
    m = mask.reshape(u.grid.shape)
    return ScalarField(u.grid, vals.reshape(u.grid.shape), u.t, mask=m)


@dataclass
class BochnerResult:
    """Pointwise Bochner-Weitzenbock terms on evaluated nodes."""

    residual: ScalarField
    margin: ScalarField
    lhs: np.ndarray
    ric_inf: np.ndarray
    ric_N: np.ndarray
    hs: np.ndarray
    laplacian: np.ndarray
    N: float

    @property
    def max_residual(self) -> float:
        return self.residual.abs_max()

    @property
    def min_margin(self) -> float:
        return self.margin.min()


def _dilate(grid, mask):
    out = mask.copy()
    for i in range(grid.n):
        e = np.zeros(grid.n, dtype=int)
        e[i] = 1
        out &= grid.shift(mask, e) & grid.shift(mask, -e)
    return out


def bochner_residual(metric: FinslerStructure, measure: MeasureField, u: ScalarField, N=None) -> BochnerResult:
    """Identity residual LHS - Ric_inf(nabla u) - |Hess u|^2 and inequality margin at ``N``.

    LHS is ``Delta^{nabla u}(F^2(nabla u)/2) - d(Delta u)(nabla u)``; the
    curvature terms are 2-homogeneous (``F^2`` times the 0-homogeneous
    quantity). The inequality margin is ``LHS - F^2 Ric_N - (Delta u)^2/N``;
    ``N`` defaults to the dimension.
    """
    grid = u.grid
    n = grid.n
    N = float(n if N is None else N)
    if N < n:
        raise DomainError(f"N must be at least n = {n}")
    Vf = gradient_field(metric, u)
    V = Vf.flat()
    params = metric.node_params(grid)
    base = np.linalg.norm(differential(u).flat(), axis=-1) >= EPS_MASK
    mask = _dilate(grid, base.reshape(grid.shape)).reshape(-1)
    ref = np.where(base[:, None], V, np.eye(n)[0])

    half_f2 = 0.5 * np.where(base, f2_values(metric, params, ref), 0.0)
    lap = divergence(measure, Vf).values
    lhs = weighted_laplacian(metric, measure, Vf, half_f2.reshape(grid.shape)).values.reshape(-1)
    dlap = np.stack([grid.diff(lap, i) for i in range(n)], axis=-1).reshape(-1, n)
    lhs = lhs - np.einsum("pi,pi->p", dlap, V)

    patch = metric.node_patch(grid, K.block(n))
    tr = np.asarray(K.batched_ricci_trace(metric.family, n)(patch, ref, grid.h))
    S, Sdot, F = _s_curvature_values(metric, measure, grid.nodes(), ref, grid.h)
    ric_inf = tr + F**2 * Sdot
    if np.isinf(N):
        ric_N = ric_inf
    elif N == n:
        ric_N = np.where(np.abs(S) > 1e-8 * F, -np.inf, ric_inf)
    else:
        ric_N = ric_inf - S**2 / (N - n)

    H, g, _ = hessian_matrix(metric, u)
    hs = hs_norm_sq(H, g)
    lap_flat = lap.reshape(-1)
    resid = np.where(mask, lhs - ric_inf - hs, np.nan)
    margin = np.where(mask, lhs - ric_N - lap_flat**2 / N, np.nan)
    m = mask.reshape(grid.shape)
    return BochnerResult(
        residual=ScalarField(grid, resid.reshape(grid.shape), u.t, mask=m),
        margin=ScalarField(grid, margin.reshape(grid.shape), u.t, mask=m),
        lhs=lhs,
        ric_inf=ric_inf,
        ric_N=ric_N,
        hs=hs,
        laplacian=lap_flat,
        N=N,
    )
