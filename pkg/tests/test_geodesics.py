import numpy as np
import pytest

from instances import rotating_randers
from finslerlab import geodesics as G
from finslerlab import metric as M
from finslerlab.errors import DomainError
from finslerlab.grid import TorusGrid

GRID = TorusGrid(2, 16)
B = np.array([0.3, -0.2])


def test_euclidean_geodesic_is_straight():
    path = G.shoot_geodesic(M.euclidean(2), [0.1, 0.2], [0.5, -0.25], 1.0)
    np.testing.assert_allclose(path.x[-1], [0.6, -0.05], atol=1e-12)
    np.testing.assert_allclose(path.speed(M.euclidean(2)), np.hypot(0.5, 0.25))


def test_randers_speed_is_conserved():
    F = rotating_randers()
    path = G.shoot_geodesic(F, [0.2, 0.3], [0.4, 0.3], 1.0, h=1 / 32)
    s = path.speed(F)
    assert np.ptp(s) <= 1e-5 * s[0]


def test_constant_randers_segment_distance():
    F = M.randers(None, B)
    x, y = np.array([0.1, 0.2]), np.array([0.4, 0.35])
    d, D = G.segment_distance(F, 1.0, x, y)
    np.testing.assert_allclose(D, y - x)
    assert d == pytest.approx(np.linalg.norm(y - x) + B @ (y - x), rel=1e-12)


def test_distance_is_asymmetric():
    F = M.randers(None, B)
    x, y = GRID.point((2, 3)), GRID.point((6, 5))
    dxy, dyx = G.effective_distance(F, GRID, x, y), G.effective_distance(F, GRID, y, x)
    assert dxy - dyx == pytest.approx(2 * B @ (y - x), rel=1e-10)


def test_graph_distance_bounds_euclidean():
    F = M.euclidean(2)
    x, y = GRID.point((0, 0)), GRID.point((5, 2))
    d = G.distance(F, GRID, x, y)
    exact = np.linalg.norm(y - x)
    assert exact - 1e-12 <= d <= 1.05 * exact
    assert G.effective_distance(F, GRID, x, y) == pytest.approx(exact, rel=1e-12)
    assert G.effective_distance(F, GRID, x, x) == 0.0


def test_distance_uses_nearest_image():
    F = M.euclidean(2)
    assert G.effective_distance(F, GRID, GRID.point((0, 0)), GRID.point((15, 0))) == pytest.approx(GRID.h)


def test_reverse_curve_endpoints():
    F = rotating_randers()
    y, x = GRID.point((4, 4)), GRID.point((7, 6))
    curve = G.reverse_geodesic_curve(F, GRID, y, x, 0.2, 0.5)
    assert not curve.fallback
    assert curve.t[0] == pytest.approx(0.2) and curve.t[-1] == pytest.approx(0.5)
    np.testing.assert_allclose(curve.x[-1], y)
    np.testing.assert_allclose(curve.x[0], x, atol=1e-3 * GRID.h)


def test_reverse_curve_needs_ordered_times():
    with pytest.raises(DomainError):
        G.reverse_geodesic_curve(M.euclidean(2), GRID, np.zeros(2), np.ones(2) * 0.25, 0.5, 0.5)


def test_zero_velocity_rejected():
    with pytest.raises(DomainError):
        G.shoot_geodesic(M.euclidean(2), [0.0, 0.0], [0.0, 0.0])
