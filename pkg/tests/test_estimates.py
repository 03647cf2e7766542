import numpy as np
import pytest

from finslerlab import curvature as C
from finslerlab import estimates as E
from finslerlab import heat as H
from finslerlab import metric as M
from finslerlab.errors import DomainError, PreconditionError
from finslerlab.grid import ScalarField, TorusGrid

K, N = -1.0, 3.0


def _beta_exact(t):
    # b = t^2, K = -1: Q = int_0^t s^2 e^{2s} ds in closed form
    Q = np.exp(2 * t) * (t**2 / 2 - t / 2 + 0.25) - 0.25
    return 1.0 - 2.0 * np.exp(-2 * t) * Q / t**2


def test_remark_poly_rhs_hand_value():
    # 2 * 1.5^2 / (16 * 0.5 * 0.5) + 2 * 0.5 / 4 + 1
    assert E.remark_poly_rhs(2, -1.0, 0.5, 1.0) == pytest.approx(2.375, rel=1e-15)


def test_corollary_beta_closed_form():
    B = E.corollary_bounds(K, N)
    ts = np.array([0.05, 0.3, 1.0])
    np.testing.assert_allclose(B.beta(ts), _beta_exact(ts), rtol=1e-10)


def test_corollary_psi_against_riemann_sum():
    B = E.corollary_bounds(K, N)
    t = 0.6
    s = (np.arange(200000) + 0.5) * t / 200000
    riemann = np.sum(4.0 / _beta_exact(s)) * t / 200000
    assert B.psi(t) == pytest.approx(N / (8 * t**2) * riemann, rel=1e-8)


def test_corollary_beta_tends_to_one():
    B = E.corollary_bounds(K, N)
    assert B.beta(1e-6) == pytest.approx(1.0, abs=1e-5)
    assert B.om_beta(1e-6) > 0


@pytest.mark.parametrize("lam", ["sqrt-b", "b"])
def test_corollary_derivatives_consistent(lam):
    B = E.corollary_bounds(K, N, lam=lam)
    for t in (0.01, 0.2, 0.9):
        assert B.d_beta(t) == pytest.approx(E.numeric_derivative(B.beta, t), rel=1e-6)
        assert B.d_psi(t) == pytest.approx(E.numeric_derivative(B.psi, t), rel=1e-6)
        assert B.d_lam(t) == pytest.approx(E.numeric_derivative(B.lam, t), rel=1e-6)


def test_corollary_conditions_pass():
    rep = E.check_conditions_static(E.corollary_bounds(K, N), K, N, E.log_time_grid(0.5))
    assert rep.passed and [v.name for v in rep.verdicts] == ["B1", "B2", "B3", "B4", "B5"]


def test_beta_above_one_fails_first_condition():
    B = E.make_bounds_static("constant", {"beta": 1.5, "psi": 1.0})
    rep = E.check_conditions_static(B, 0.0, N, E.log_time_grid(0.5))
    assert rep.first_failure().name == "B1"


@pytest.mark.parametrize("kind,params", [("remark-poly", {"theta": 0.5}), ("remark-sinh", {})])
def test_remark_kinds_satisfy_conditions(kind, params):
    B = E.make_bounds_static(kind, {"K": K, "N": N, **params})
    assert E.check_conditions_static(B, K, N, E.log_time_grid(0.5)).passed


def test_bad_kinds_and_curvature_signs():
    with pytest.raises(DomainError):
        E.make_bounds_static("parabolic")
    with pytest.raises(DomainError):
        E.corollary_bounds(0.0, N)
    with pytest.raises(DomainError):
        E.make_bounds_flow("constant-theta", {"theta": 0.5})


def test_constant_solution_margin_is_minus_psi():
    grid = TorusGrid(2, 16)
    dt = 0.5 * H.cfl_limit(M.euclidean(2), grid)
    traj = H.solve_heat(M.euclidean(2), C.lebesgue(), ScalarField(grid, np.full(grid.shape, 2.0)), 30 * dt, dt)
    B = E.corollary_bounds(K, N)
    rep = E.verify_static_estimate(traj, B, K, N)
    for t, _, m in rep.rows:
        assert m == pytest.approx(-B.psi(t), rel=1e-9)
    assert rep.passed


def test_curvature_below_assumed_K_is_a_precondition_failure():
    grid = TorusGrid(2, 16)
    dt = 0.5 * H.cfl_limit(M.euclidean(2), grid)
    traj = H.solve_heat(M.euclidean(2), C.lebesgue(), H.constant_plus_mode(grid), 10 * dt, dt)
    fake = C.CurvatureBounds(K=-5.0, K1=5.0, K2=0.0, K3=None, K4=None, N=N, n_samples=1)
    with pytest.raises(PreconditionError):
        E.verify_static_estimate(traj, E.corollary_bounds(K, N), K, N, curvature=fake)


def test_tolerance_budget_formula():
    assert E.tolerance_budget(2.0, 0.1, 0.01) == pytest.approx(10 * 2.0 * 0.11)
    assert E.tolerance_budget(2.0, 0.1, 0.01, c_disc=1.0) == pytest.approx(0.11)


def test_quadruples_are_seeded_and_ordered():
    grid = TorusGrid(2, 16)
    dt = 0.5 * H.cfl_limit(M.euclidean(2), grid)
    traj = H.solve_heat(M.euclidean(2), C.lebesgue(), H.constant_plus_mode(grid), 10 * dt, dt)
    q1 = E.sample_quadruples(traj, 40, seed=1)
    assert q1 == E.sample_quadruples(traj, 40, seed=1) != E.sample_quadruples(traj, 40, seed=2)
    assert all(0 < i < j for i, _, j, _ in q1)
    assert sum(x == y for _, x, _, y in q1) >= 4


def test_flow_conditions_for_constant_theta():
    rep = E.check_conditions_flow(E.make_bounds_flow("constant-theta", {"theta": 2.0}), E.log_time_grid(0.1))
    assert rep.passed


def test_gaussian_sharpness_reports_location():
    grid = TorusGrid(2, 32)
    u0 = H.gaussian_bump(grid, tau0=4 * grid.h**2, floor=1e-6)
    dt = 0.1 * grid.h**2
    traj = H.solve_heat(M.euclidean(2), C.lebesgue(), u0, 40 * dt, dt, allow_small=True)
    res = E.gaussian_sharpness(traj)
    assert 0.0 < res["sup_ratio"] < 1.0 and len(res["location"]) == 2
