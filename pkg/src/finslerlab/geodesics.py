"""Geodesic shooting and the directed Finsler distance on a periodic grid."""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import product

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .curvature import DEFAULT_STEP, geodesic_rk4
from .errors import DomainError, NumericalError
from .grid import TorusGrid
from .metric import FinslerStructure, _require_nonzero, f2_values

GAUSS2 = (np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)]), np.array([0.5, 0.5]))
MIN_STEP = 1e-14


def _F(metric, X, Y):
    return np.sqrt(f2_values(metric, metric.param_values(X), Y))


@dataclass
class GeodesicPath:
    """Samples ``(t_k, x_k, xdot_k)`` of a curve, in unwrapped coordinates."""

    t: np.ndarray
    x: np.ndarray
    v: np.ndarray
    step: float
    fallback: bool = False
    note: str = ""

    def speed(self, metric: FinslerStructure) -> np.ndarray:
        return _F(metric, self.x, self.v)

    def endpoint(self, L: float | None = None) -> np.ndarray:
        return self.x[-1] if L is None else np.mod(self.x[-1], L)


def shoot_geodesic(metric: FinslerStructure, x, v, T: float = 1.0, *, h: float = 1.0 / 64, fd_step: float = DEFAULT_STEP):
    """Integrate x'' = -2 G(x, x') from (x, v) over [0, T].

    The RK4 step is at most ``h / (4 F(v))`` so each step moves at most a
    quarter of a grid cell.
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    _require_nonzero(v[None])
    speed = float(_F(metric, x[None], v[None])[0])
    steps = max(1, int(np.ceil(abs(T) * speed * 4.0 / h)))
    dt = T / steps
    if abs(dt) < MIN_STEP:
        raise NumericalError(f"geodesic step {dt:.3e} underflows")
    xs, vs = geodesic_rk4(metric, x[None], v[None], dt, steps, fd_step)
    return GeodesicPath(np.linspace(0.0, T, steps + 1), xs[:, 0], vs[:, 0], dt)


# ---------------------------------------------------------------------------
# grid graph


def stencil(n: int) -> np.ndarray:
    """Edge offsets: primitive lattice vectors of sup-norm <= 4 in 2-D; neighbours plus knight moves in 3-D."""
    out = []
    for o in product(range(-4, 5), repeat=n):
        a = sorted(abs(c) for c in o if c)
        if not a or np.gcd.reduce(a) != 1:
            continue
        if n == 2 or max(a) == 1 or a == [1, 2]:
            out.append(o)
    return np.array(out, dtype=int)


def segment_integral(metric: FinslerStructure, X0, D, nodes=GAUSS2) -> np.ndarray:
    """Integral of F along straight segments X0 + s*D, s in [0, 1]."""
    s, w = nodes
    X0 = np.asarray(X0, dtype=float)
    D = np.asarray(D, dtype=float)
    total = 0.0
    for sk, wk in zip(s, w):
        total = total + wk * _F(metric, X0 + sk * D, D)
    return total


class DistanceGraph:
    """Directed stencil graph of one metric snapshot; rows of distances are cached per source."""

    def __init__(self, metric: FinslerStructure, grid: TorusGrid):
        self.metric = metric
        self.grid = grid
        self.offsets = stencil(grid.n)
        idx = np.indices(grid.shape).reshape(grid.n, -1).T
        X = grid.nodes()
        rows, cols, wts = [], [], []
        for o in self.offsets:
            target = np.ravel_multi_index(tuple(((idx + o) % grid.m).T), grid.shape)
            D = np.broadcast_to(o * grid.h, X.shape)
            rows.append(np.arange(grid.size))
            cols.append(target)
            wts.append(segment_integral(metric, X, D))
        self.matrix = csr_matrix(
            (np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size)
        )
        self._rows = {}

    def _solve(self, src: int):
        if src not in self._rows:
            dist, pred = dijkstra(self.matrix, directed=True, indices=src, return_predecessors=True)
            self._rows[src] = (dist, pred)
        return self._rows[src]

    def distances_from(self, x) -> np.ndarray:
        """Distances from the node nearest ``x`` to every node, shape ``grid.shape``."""
        src = self.grid.flat_index(self.grid.snap(x))
        return self._solve(src)[0].reshape(self.grid.shape)

    def distance(self, x, y) -> float:
        src = self.grid.flat_index(self.grid.snap(x))
        dst = self.grid.flat_index(self.grid.snap(y))
        return float(self._solve(src)[0][dst])

    def path(self, x, y) -> np.ndarray:
        """Unwrapped node positions of the shortest path from x to y (starting at the node nearest x)."""
        g = self.grid
        src = g.flat_index(g.snap(x))
        dst = g.flat_index(g.snap(y))
        _, pred = self._solve(src)
        chain = [dst]
        while chain[-1] != src:
            p = pred[chain[-1]]
            if p < 0:
                raise NumericalError("grid graph is disconnected")
            chain.append(p)
        chain.reverse()
        multi = np.array(np.unravel_index(chain, g.shape)).T
        steps = (np.diff(multi, axis=0) + g.m // 2) % g.m - g.m // 2
        start = np.array(g.snap(x))
        pos = np.vstack([start, start + np.cumsum(steps, axis=0)]) if len(steps) else start[None]
        return pos * g.h


def distance_graph(metric: FinslerStructure, grid: TorusGrid) -> DistanceGraph:
    """Graph for this metric snapshot, built once and cached on the metric."""
    key = ("graph", grid.n, grid.m, grid.L)
    cache = metric._node_cache
    if key not in cache:
        cache[key] = DistanceGraph(metric, grid)
    return cache[key]


def distance(metric: FinslerStructure, grid: TorusGrid, x, y) -> float:
    """Directed grid-graph distance d_F(x, y) between the nodes nearest x and y."""
    return distance_graph(metric, grid).distance(x, y)


GAUSS16 = tuple(
    np.asarray(a) for a in ((np.polynomial.legendre.leggauss(16)[0] + 1) / 2, np.polynomial.legendre.leggauss(16)[1] / 2)
)


def segment_distance(metric: FinslerStructure, L: float, x, y, radius: int = 1):
    """Shortest straight-segment length from x to any lattice image of y.

    Returns ``(length, displacement)``; an upper bound on d_F(x, y).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = x.shape[0]
    shifts = np.array(list(product(range(-radius, radius + 1), repeat=n)), dtype=float) * L
    base = y - x
    base = base - L * np.round(base / L)
    D = base[None, :] + shifts
    X0 = np.broadcast_to(x, D.shape)
    vals = segment_integral(metric, X0, D, GAUSS16)
    vals = np.where(np.linalg.norm(D, axis=-1) > 0, vals, 0.0)
    i = int(np.argmin(vals))
    return float(vals[i]), D[i]


def effective_distance(metric: FinslerStructure, grid: TorusGrid, x, y) -> float:
    """min(grid-graph distance, straight-segment length); both bound d_F from above."""
    if np.allclose(np.mod(np.asarray(x) - np.asarray(y) + grid.L / 2, grid.L) - grid.L / 2, 0.0):
        return 0.0
    seg, _ = segment_distance(metric, grid.L, x, y)
    return min(distance(metric, grid, x, y), seg)


def reverse_geodesic_curve(metric: FinslerStructure, grid: TorusGrid, y, x, s: float, t: float, *, tol=None, max_iter=20):
    """Curve eta on [s, t] with eta(t) = y, eta(s) = x, eta(tau) = exp_y((t - tau) v).

    ``v`` is found by Newton shooting on the endpoint, started from the grid
    path's net displacement. If shooting fails the piecewise-linear grid path
    is returned with ``fallback=True``.
    """
    if not s < t:
        raise DomainError("reverse curve needs s < t")
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    tol = 1e-3 * grid.h if tol is None else tol
    T = t - s
    graph = distance_graph(metric, grid)
    gpath = graph.path(y, x)
    target = y + (gpath[-1] - gpath[0]) + (x - grid.point(grid.snap(x))) - (y - grid.point(grid.snap(y)))
    if np.allclose(target, y):
        n = grid.n
        tau = np.array([s, t])
        return GeodesicPath(tau, np.stack([y, y]), np.zeros((2, n)), T)

    def endpoint(v):
        return shoot_geodesic(metric, y, v, T, h=grid.h).x[-1]

    v = (target - y) / T
    ok = False
    for _ in range(max_iter):
        r = endpoint(v) - target
        if np.linalg.norm(r) <= tol:
            ok = True
            break
        eps = 1e-6 * max(np.linalg.norm(v), 1e-12)
        J = np.stack([(endpoint(v + eps * e) - endpoint(v - eps * e)) / (2 * eps) for e in np.eye(grid.n)], axis=1)
        try:
            v = v - np.linalg.solve(J, r)
        except np.linalg.LinAlgError:
            break
    if ok:
        path = shoot_geodesic(metric, y, v, T, h=grid.h)
        tau = t - path.t
        return GeodesicPath(tau[::-1], path.x[::-1], -path.v[::-1], path.step)
    # piecewise grid path, traversed from x at tau = s to y at tau = t
    pts = gpath[::-1] + (y - gpath[0])
    seglen = segment_integral(metric, pts[:-1], np.diff(pts, axis=0))
    frac = np.concatenate([[0.0], np.cumsum(seglen)]) / max(np.sum(seglen), 1e-300)
    vel = np.diff(pts, axis=0) / np.maximum(np.diff(frac)[:, None] * T, 1e-300)
    vel = np.vstack([vel, vel[-1:]])
    return GeodesicPath(s + frac * T, pts, vel, T / max(len(seglen), 1), fallback=True, note="Newton shooting did not converge")
