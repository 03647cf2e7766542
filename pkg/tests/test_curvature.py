import numpy as np
import pytest

from instances import general_randers, sample_riemannian
from finslerlab import curvature as C
from finslerlab import metric as M
from finslerlab.errors import DomainError
from finslerlab.fields import ModeField
from finslerlab.grid import TorusGrid

PHI = ModeField(0.0, [(0.1, [1, 0], 0.0)])


def _phi(x):
    return 0.1 * np.cos(2 * np.pi * x[0])


def test_conformal_ricci_is_gauss_curvature():
    # K = -e^{-2 phi} Lap phi for a 2-D conformal metric, in every direction
    F = M.conformal(PHI)
    for x in ([0.13, 0.4], [0.71, 0.05]):
        x = np.array(x)
        lap = -0.4 * np.pi**2 * np.cos(2 * np.pi * x[0])
        gauss = -np.exp(-2 * _phi(x)) * lap
        for y in ([1.0, 0.0], [0.3, -2.0]):
            assert C.ricci_scalar(F, x, np.array(y)) == pytest.approx(gauss, rel=1e-4)


def test_conformal_s_curvature_against_lebesgue():
    # tau = 2 phi, so S(y) = 2 dphi(y)
    F = M.conformal(PHI)
    x, y = np.array([0.13, 0.4]), np.array([1.0, 0.5])
    dphi = np.array([-0.2 * np.pi * np.sin(2 * np.pi * x[0]), 0.0])
    S, _ = C.s_curvature(F, C.lebesgue(), x, y)
    assert S == pytest.approx(2 * dphi @ y, rel=1e-6)


def test_ricci_is_zero_homogeneous():
    F = general_randers()
    x, y = np.array([0.3, 0.6]), np.array([0.4, -0.9])
    assert C.ricci_scalar(F, x, 3.0 * y) == pytest.approx(C.ricci_scalar(F, x, y), rel=1e-6, abs=1e-8)


def test_weighted_ricci_needs_large_N():
    with pytest.raises(DomainError):
        C.weighted_ricci(M.euclidean(2), C.lebesgue(), 1.5, np.zeros(2), np.array([1.0, 0.0]))


def test_flat_bounds_vanish():
    b = C.curvature_bounds(M.euclidean(2), C.lebesgue(), TorusGrid(2, 8), 3.0)
    assert b.K == pytest.approx(0.0, abs=1e-9)
    assert b.K1 == pytest.approx(0.0, abs=1e-9) and b.K2 == pytest.approx(0.0, abs=1e-9)


def test_riemannian_volume_density():
    F = sample_riemannian()
    X = np.array([[0.2, 0.9]])
    g = F.param_values(X)["g"][0]
    assert C.riemannian_volume(F).density(X)[0] == pytest.approx(np.sqrt(np.linalg.det(g)))


def test_unit_directions():
    d = C.unit_directions(2, 12)
    np.testing.assert_allclose(np.linalg.norm(d, axis=-1), 1.0)
    assert C.unit_directions(3).shape == (26, 3)
