"""Spatially varying parameter fields for metric families and measures.

Every field is a callable ``field(X)`` mapping points ``X`` of shape
``(..., n)`` to values of shape ``(...,) + field.shape``. Grid-backed fields
interpolate periodically between nodes and reproduce node values exactly.
"""

from __future__ import annotations

import numpy as np
from scipy import ndimage

from .errors import DomainError
from .grid import TorusGrid


class ParamField:
    shape: tuple = ()
    is_constant: bool = False

    def __call__(self, X) -> np.ndarray:
        raise NotImplementedError

    def on_grid(self, grid: TorusGrid) -> np.ndarray:
        """Node values, shape ``grid.shape + self.shape``."""
        return np.asarray(self(grid.coords()), dtype=float)


class ConstantField(ParamField):
    is_constant = True

    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)
        self.shape = self.value.shape

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        return np.broadcast_to(self.value, X.shape[:-1] + self.shape).copy()

    def __repr__(self):
        return f"ConstantField({self.value.tolist()})"


class AnalyticField(ParamField):
    """Wraps a vectorized numpy function of position."""

    def __init__(self, fn, shape=()):
        self.fn = fn
        self.shape = tuple(shape)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        out = np.asarray(self.fn(X), dtype=float)
        return np.broadcast_to(out, X.shape[:-1] + self.shape).copy()


class ModeField(ParamField):
    """``c + sum_k amp_k * cos(2*pi*<k, x>/L + phase_k)``.

    ``modes`` is a sequence of ``(amp, wavevector, phase)`` triples with
    integer wavevectors, so the field is periodic on ``[0, L)^n``.
    """

    def __init__(self, constant=0.0, modes=(), L=1.0):
        self.constant = float(constant)
        self.modes = [(float(a), np.asarray(k, dtype=float), float(p)) for a, k, p in modes]
        self.L = float(L)
        self.is_constant = all(a == 0.0 or not np.any(k) for a, k, _ in self.modes)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        out = np.full(X.shape[:-1], self.constant)
        for amp, k, phase in self.modes:
            out = out + amp * np.cos(2.0 * np.pi * (X @ k) / self.L + phase)
        return out

    def __repr__(self):
        return f"ModeField({self.constant}, {[(a, k.tolist(), p) for a, k, p in self.modes]})"


class StackedField(ParamField):
    """Vector or matrix field assembled from scalar component fields."""

    def __init__(self, components, shape):
        self.components = list(components)
        self.shape = tuple(shape)
        if len(self.components) != int(np.prod(self.shape)):
            raise DomainError(f"{len(self.components)} components cannot fill shape {self.shape}")
        self.is_constant = all(c.is_constant for c in self.components)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        vals = np.stack([c(X) for c in self.components], axis=-1)
        return vals.reshape(X.shape[:-1] + self.shape)


class GridField(ParamField):
    """Node values on a torus grid, interpolated by periodic cubic splines."""

    def __init__(self, grid: TorusGrid, values):
        values = np.asarray(values, dtype=float)
        if values.shape[: grid.n] != grid.shape:
            raise DomainError(f"grid field shape {values.shape} does not start with {grid.shape}")
        self.grid = grid
        self.values = values
        self.shape = values.shape[grid.n:]
        comps = values.reshape(grid.shape + (-1,))
        self._coeffs = [
            ndimage.spline_filter(comps[..., c], order=3, mode="grid-wrap") for c in range(comps.shape[-1])
        ]
        self.is_constant = bool(np.all(values == values.reshape((-1,) + self.shape)[0]))

    def on_grid(self, grid):
        if grid == self.grid:
            return self.values
        return super().on_grid(grid)

    def __call__(self, X):
        X = np.asarray(X, dtype=float)
        lead = X.shape[:-1]
        coords = (X.reshape(-1, self.grid.n) / self.grid.h).T
        out = [
            ndimage.map_coordinates(c, coords, order=3, mode="grid-wrap", prefilter=False) for c in self._coeffs
        ]
        return np.stack(out, axis=-1).reshape(lead + self.shape)


def as_field(value, shape=None) -> ParamField:
    """Coerce constants and callables to fields."""
    if isinstance(value, ParamField):
        return value
    if callable(value):
        return AnalyticField(value, () if shape is None else shape)
    return ConstantField(value)
