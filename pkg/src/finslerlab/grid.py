"""Periodic uniform grids and grid-sampled tensor fields."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import product

import numpy as np

from .errors import DomainError


@dataclass(frozen=True)
class TorusGrid:
    """Uniform periodic grid on the flat torus ``[0, L)^n``.

    Parameters
    ----------
    n : int
        Spatial dimension (2 or 3).
    m : int
        Nodes per axis, at least 8.
    L : float
        Period along every axis.
    """

    n: int
    m: int
    L: float = 1.0

    def __post_init__(self):
        if self.n not in (2, 3):
            raise DomainError(f"dimension must be 2 or 3, got {self.n}")
        if self.m < 8:
            raise DomainError(f"need at least 8 nodes per axis, got {self.m}")
        if not self.L > 0:
            raise DomainError(f"period must be positive, got {self.L}")

    @property
    def h(self) -> float:
        return self.L / self.m

    @property
    def shape(self) -> tuple:
        return (self.m,) * self.n

    @property
    def size(self) -> int:
        return self.m ** self.n

    @property
    def cell_volume(self) -> float:
        return self.h ** self.n

    def coords(self) -> np.ndarray:
        """Node coordinates, shape ``(m,)*n + (n,)``."""
        axis = np.arange(self.m) * self.h
        mesh = np.meshgrid(*([axis] * self.n), indexing="ij")
        return np.stack(mesh, axis=-1)

    def nodes(self) -> np.ndarray:
        """Flattened node coordinates, shape ``(m**n, n)``."""
        return self.coords().reshape(-1, self.n)

    def wrap(self, x):
        return np.mod(x, self.L)

    def snap(self, x) -> tuple:
        """Multi-index of the node nearest to ``x`` (periodic)."""
        idx = np.rint(np.asarray(x, dtype=float) / self.h).astype(int) % self.m
        return tuple(int(i) for i in idx)

    def flat_index(self, multi) -> int:
        return int(np.ravel_multi_index(tuple(np.asarray(multi) % self.m), self.shape))

    def point(self, multi) -> np.ndarray:
        return (np.asarray(multi) % self.m) * self.h

    def refine(self, k: int = 1) -> "TorusGrid":
        return TorusGrid(self.n, self.m * 2 ** k, self.L)

    def shift(self, values, offset):
        """Values at ``x + offset*h`` for every node ``x``."""
        axes = tuple(range(self.n))
        return np.roll(values, tuple(-int(o) for o in offset), axis=axes)

    def diff(self, values, axis: int) -> np.ndarray:
        """Second-order periodic central difference along ``axis``."""
        return (np.roll(values, -1, axis=axis) - np.roll(values, 1, axis=axis)) / (2.0 * self.h)

    def integrate(self, values, density=None) -> float:
        """Riemann sum of ``values * density`` over the torus."""
        weights = values if density is None else values * density
        return float(np.sum(weights) * self.cell_volume)

    def lattice_shifts(self, radius: int = 1) -> np.ndarray:
        """Integer lattice translations used for nearest-image searches."""
        return np.array(list(product(range(-radius, radius + 1), repeat=self.n)), dtype=float) * self.L


@dataclass
class ScalarField:
    """Grid-sampled scalar field.

    ``mask`` marks nodes where the value was evaluated; masked-out nodes
    hold ``nan``.
    """

    grid: TorusGrid
    values: np.ndarray
    t: float = 0.0
    mask: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != self.grid.shape:
            raise DomainError(f"scalar field shape {self.values.shape} does not match grid {self.grid.shape}")

    @property
    def evaluated(self) -> np.ndarray:
        if self.mask is None:
            return np.ones(self.grid.shape, dtype=bool)
        return self.mask

    def max(self) -> float:
        vals = self.values[self.evaluated]
        return float(np.max(vals)) if vals.size else float("nan")

    def min(self) -> float:
        vals = self.values[self.evaluated]
        return float(np.min(vals)) if vals.size else float("nan")

    def abs_max(self) -> float:
        vals = self.values[self.evaluated]
        return float(np.max(np.abs(vals))) if vals.size else float("nan")


@dataclass
class VectorField:
    """Grid-sampled vector field with ``n`` components per node (last axis)."""

    grid: TorusGrid
    values: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        expected = self.grid.shape + (self.grid.n,)
        if self.values.shape != expected:
            raise DomainError(f"vector field shape {self.values.shape} does not match {expected}")

    def flat(self) -> np.ndarray:
        return self.values.reshape(-1, self.grid.n)


class CovectorField(VectorField):
    """Grid-sampled covector field (components ``du_i`` on the last axis)."""


def sample(grid: TorusGrid, fn, t: float = 0.0) -> ScalarField:
    """Sample a vectorized function ``fn(coords) -> values`` at the nodes."""
    return ScalarField(grid, fn(grid.coords()), t)


def dump_field_csv(path, fld) -> None:
    """Write node coordinates followed by the field components, one row per node."""
    grid = fld.grid
    coords = grid.nodes()
    vals = fld.values.reshape(grid.size, -1)
    names = [f"x{i + 1}" for i in range(grid.n)]
    names += ["value"] if vals.shape[1] == 1 else [f"v{i + 1}" for i in range(vals.shape[1])]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["t"] + names)
        for x, v in zip(coords, vals):
            writer.writerow([repr(float(fld.t))] + [repr(float(c)) for c in x] + [repr(float(c)) for c in v])
