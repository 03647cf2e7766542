import numpy as np
import pytest

from instances import general_randers, sample_conformal, sample_riemannian
from finslerlab import curvature as C
from finslerlab import flow as FL
from finslerlab import heat as H
from finslerlab import metric as M
from finslerlab.errors import ConfigurationError, UnsupportedFamilyError
from finslerlab.grid import TorusGrid

GRID = TorusGrid(2, 16)


def test_flat_step_returns_same_object():
    for F in (M.euclidean(2), M.randers(None, [0.2, 0.1]), M.conformal(0.3)):
        assert FL.flow_step(F, GRID, 1e-4) is F


def test_nonflat_randers_is_unsupported():
    with pytest.raises(UnsupportedFamilyError):
        FL.flow_step(general_randers(), GRID, 1e-5)


def test_flow_step_guard():
    F = sample_conformal()
    with pytest.raises(ConfigurationError):
        FL.solve_flow(F, GRID, C.lebesgue(), 2 * FL.flow_limit(F, GRID), 1)


def test_riemannian_step_matches_tensor_update():
    F = sample_riemannian()
    dt = 0.5 * FL.flow_limit(F, GRID)
    G1 = FL.flow_step(F, GRID, dt).node_params(GRID)["g"]
    _, T = C.node_ricci(F, GRID, np.tile([1.0, 0.0], (GRID.size, 1)))
    np.testing.assert_allclose(G1, F.node_params(GRID)["g"] - dt * (T + np.swapaxes(T, -1, -2)), atol=1e-14)


def test_conformal_flow_smooths_phi():
    F = sample_conformal()
    fl = FL.solve_flow(F, GRID, C.lebesgue(), FL.flow_limit(F, GRID), 20)
    spread = [np.ptp(m.node_params(GRID)["phi"]) for m in fl.metrics]
    assert np.all(np.diff(spread) < 0)
    assert len(fl.bounds_table()) == 21 and all(b.K3 == 0.0 for b in fl.bounds)


def test_interpolation_hits_snapshots():
    F = sample_conformal()
    fl = FL.solve_flow(F, GRID, C.lebesgue(), FL.flow_limit(F, GRID), 3)
    assert fl.metric_at(float(fl.t[2])) is fl.metrics[2]
    mid = fl.metric_at(0.5 * float(fl.t[1] + fl.t[2])).node_params(GRID)["phi"]
    lo, hi = fl.metrics[1].node_params(GRID)["phi"], fl.metrics[2].node_params(GRID)["phi"]
    assert np.all(mid >= np.minimum(lo, hi) - 1e-15) and np.all(mid <= np.maximum(lo, hi) + 1e-15)


def test_flat_bounds_are_exact_zeros():
    b = FL.step_bounds(M.randers(None, [0.2, 0.0]), C.lebesgue(), GRID)
    assert (b.K, b.K1, b.K2, b.K3, b.K4) == (0.0, 0.0, 0.0, 0.0, 0.0)


def test_evolution_identity_residual_shrinks():
    res = []
    for m in (16, 32):
        grid = TorusGrid(2, m)
        F = sample_conformal()
        dt = FL.flow_limit(F, grid)
        fl = FL.solve_flow(F, grid, C.lebesgue(), dt, 8)
        heat = FL.solve_heat_under_flow(fl, H.constant_plus_mode(grid), dt)
        r = FL.evolution_identity_residual(fl, heat, 4)
        res.append(r.abs_max())
    assert res[1] < 0.5 * res[0]
