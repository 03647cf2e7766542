"""Finsler metric families: norm, fundamental tensor, dual norm, Legendre transform."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .errors import DomainError, NumericalError, StrongConvexityError
from .fields import ConstantField, ParamField, as_field
from .grid import TorusGrid

ZERO_THRESHOLD = 1e-12
RANDERS_MARGIN = 1e-6

PARAM_SHAPES = {
    "euclidean": {},
    "riemannian": {"g": "nn"},
    "randers": {"a": "nn", "b": "n"},
    "conformal": {"phi": ""},
}


@dataclass(frozen=True, eq=False)
class FinslerStructure:
    """A parameterized Minkowski-norm field F(x, y) on an n-torus.

    Use the family constructors (:func:`euclidean`, :func:`riemannian`,
    :func:`randers`, :func:`conformal`) rather than building this directly.
    """

    family: str
    n: int
    params: dict = field(default_factory=dict)
    _node_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.family not in PARAM_SHAPES:
            raise DomainError(f"unknown metric family {self.family!r}; supported: {sorted(PARAM_SHAPES)}")
        if self.n not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {self.n}")
        for name, kind in PARAM_SHAPES[self.family].items():
            expected = {"nn": (self.n, self.n), "n": (self.n,), "": ()}[kind]
            if name not in self.params:
                raise DomainError(f"{self.family} metric needs parameter {name!r}")
            if tuple(self.params[name].shape) != expected:
                raise DomainError(f"parameter {name!r} has shape {self.params[name].shape}, expected {expected}")

    @property
    def is_flat(self) -> bool:
        """All parameters constant: the metric is locally Minkowski."""
        return all(p.is_constant for p in self.params.values())

    def param_values(self, X) -> dict:
        X = np.asarray(X, dtype=float)
        return {name: np.asarray(f(X), dtype=float) for name, f in self.params.items()}

    def node_params(self, grid: TorusGrid) -> dict:
        """Parameters at every node, flattened to ``(m**n, *shape)``."""
        key = (grid.n, grid.m, grid.L)
        if key not in self._node_cache:
            out = {}
            for name, f in self.params.items():
                vals = np.asarray(f.on_grid(grid), dtype=float)
                out[name] = vals.reshape((grid.size,) + tuple(f.shape))
            self._node_cache[key] = out
        return self._node_cache[key]

    def node_patch(self, grid: TorusGrid, offsets) -> dict:
        """Node parameters at ``x + o*h`` for each offset, shape ``(N, n_off, *shape)``."""
        out = {}
        for name, f in self.params.items():
            vals = np.asarray(f.on_grid(grid), dtype=float)
            shifted = [grid.shift(vals, o).reshape((grid.size,) + tuple(f.shape)) for o in offsets]
            out[name] = np.stack(shifted, axis=1)
        return out

    def point_patch(self, X, h: float, offsets) -> dict:
        """Parameters at ``X + o*h`` for arbitrary points ``X`` of shape ``(P, n)``."""
        X = np.asarray(X, dtype=float).reshape(-1, self.n)
        pts = X[:, None, :] + h * np.asarray(offsets, dtype=float)[None, :, :]
        return self.param_values(pts)

    def check_admissible(self, grid: TorusGrid | None = None) -> None:
        """Reject Randers data with ||b||_a >= 1 - 1e-6 and indefinite Riemannian data."""
        if self.family not in ("randers", "riemannian"):
            return
        if grid is None:
            constant = all(p.is_constant for p in self.params.values())
            if not constant:
                return
            vals = {k: v(np.zeros((1, self.n))) for k, v in self.params.items()}
        else:
            vals = self.node_params(grid)
        tensor = vals["a"] if self.family == "randers" else vals["g"]
        eig = np.linalg.eigvalsh(tensor)
        if np.min(eig) <= 0:
            raise StrongConvexityError(f"{self.family} tensor not positive definite (min eigenvalue {np.min(eig):.3e})")
        if self.family == "randers":
            b = vals["b"]
            bnorm = np.sqrt(np.einsum("...i,...ij,...j->...", b, np.linalg.inv(tensor), b))
            worst = float(np.max(bnorm))
            if worst >= 1.0 - RANDERS_MARGIN:
                raise StrongConvexityError(f"Randers admissibility violated: max ||b||_a = {worst:.6f} >= 1 - 1e-6")


def euclidean(n: int = 2) -> FinslerStructure:
    return FinslerStructure("euclidean", n, {})


def riemannian(g, n: int | None = None) -> FinslerStructure:
    g = as_field(g, None if n is None else (n, n))
    return FinslerStructure("riemannian", g.shape[0], {"g": g})


def randers(a, b, grid: TorusGrid | None = None) -> FinslerStructure:
    """Randers metric F = sqrt(a(y, y)) + b(y); ``a`` may be ``None`` for the identity."""
    b = as_field(b)
    n = b.shape[0]
    a = ConstantField(np.eye(n)) if a is None else as_field(a, (n, n))
    metric = FinslerStructure("randers", n, {"a": a, "b": b})
    metric.check_admissible(grid)
    return metric


def conformal(phi, n: int = 2) -> FinslerStructure:
    """Conformally flat metric F = e^phi |y|."""
    return FinslerStructure("conformal", n, {"phi": as_field(phi)})


# ---------------------------------------------------------------------------
# pointwise operations; x and y may be single points or batches (P, n)


def _batch(metric, x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    single = x.ndim == 1 and y.ndim == 1
    x2 = np.atleast_2d(x)
    y2 = np.atleast_2d(y)
    if x2.shape[0] == 1 and y2.shape[0] > 1:
        x2 = np.repeat(x2, y2.shape[0], axis=0)
    if y2.shape[0] == 1 and x2.shape[0] > 1:
        y2 = np.repeat(y2, x2.shape[0], axis=0)
    if x2.shape[-1] != metric.n or y2.shape[-1] != metric.n:
        raise DomainError(f"points and vectors must have {metric.n} components")
    return single, x2, y2


def _require_nonzero(y):
    norms = np.linalg.norm(y, axis=-1)
    if np.any(norms < ZERO_THRESHOLD):
        raise DomainError("F and its y-derivatives are undefined at the zero vector")


def f2_values(metric, params, y) -> np.ndarray:
    return np.asarray(K.batched_f2(metric.family)(params, y))


def g_values(metric, params, y) -> np.ndarray:
    return np.asarray(K.batched_gtensor(metric.family)(params, y))


def eval_metric(metric: FinslerStructure, x, y):
    """F(x, y) for nonzero y."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    val = np.sqrt(f2_values(metric, metric.param_values(x2), y2))
    return float(val[0]) if single else val


def fundamental_tensor(metric: FinslerStructure, x, y):
    """g_ij(x, y) = 1/2 d^2 F^2 / dy^i dy^j; raises if not positive definite."""
    single, x2, y2 = _batch(metric, x, y)
    _require_nonzero(y2)
    g = g_values(metric, metric.param_values(x2), y2)
    if np.min(np.linalg.eigvalsh(g)) <= 0:
        raise StrongConvexityError("fundamental tensor is not positive definite; check family parameters")
    return g[0] if single else g


def closed_form_legendre(family, params, xi) -> np.ndarray:
    """Explicit L*(xi) for the four families (Randers via its dual Randers norm)."""
    xi = np.asarray(xi, dtype=float)
    if family == "euclidean":
        return xi.copy()
    if family == "conformal":
        return np.exp(-2.0 * np.asarray(params["phi"]))[..., None] * xi
    if family == "riemannian":
        return np.linalg.solve(params["g"], xi[..., None])[..., 0]
    ainv = np.linalg.inv(params["a"])
    bu = np.einsum("...ij,...j->...i", ainv, params["b"])
    xu = np.einsum("...ij,...j->...i", ainv, xi)
    b2 = np.einsum("...i,...i->...", bu, params["b"])
    c = np.einsum("...i,...i->...", bu, xi)
    q = np.einsum("...i,...i->...", xu, xi)
    s = 1.0 - b2
    R = np.sqrt(c**2 + s * q)
    Rs = np.where(R > 0, R, 1.0)
    dual = (R - c) / s
    grad = (((c[..., None] * bu + s[..., None] * xu) / Rs[..., None]) - bu) / s[..., None]
    return np.where((R > 0)[..., None], dual[..., None] * grad, 0.0)


def legendre_params(metric, params, xi, *, label="point", method="closed"):
    """Legendre transform for pre-sampled parameters.

    ``method="newton"`` runs the generic damped Newton solve on
    g_ij(v) v^j = xi_i and raises :class:`NumericalError` with a trace if it
    fails; the default uses the explicit per-family formula.
    """
    xi = np.asarray(xi, dtype=float)
    if method == "closed":
        return closed_form_legendre(metric.family, params, xi)
    active = np.linalg.norm(xi, axis=-1) > 0
    v, conv, res, it = K.batched_legendre(metric.family)(params, xi, active)
    v = np.asarray(v)
    conv = np.asarray(conv)
    if not np.all(conv):
        bad = int(np.flatnonzero(~conv)[0])
        trace = {"iterations": int(it), "residual": np.asarray(res)[~conv].tolist()[:10], "first_failure": bad}
        raise NumericalError(f"Legendre Newton iteration did not converge at {label} {bad}", trace=trace)
    return v


def legendre_dual(metric: FinslerStructure, x, xi, method: str = "closed"):
    """The vector v with g_ij(x, v) v^j = xi_i (zero maps to zero)."""
    single, x2, xi2 = _batch(metric, x, xi)
    v = legendre_params(metric, metric.param_values(x2), xi2, method=method)
    return v[0] if single else v


def dual_norm(metric: FinslerStructure, x, xi):
    """F*(x, xi) = F(x, L*(xi))."""
    single, x2, xi2 = _batch(metric, x, xi)
    params = metric.param_values(x2)
    v = legendre_params(metric, params, xi2)
    active = np.linalg.norm(v, axis=-1) > 0
    out = np.zeros(len(v))
    if np.any(active):
        sub = {k: val[active] for k, val in params.items()}
        out[active] = np.sqrt(f2_values(metric, sub, v[active]))
    return float(out[0]) if single else out
