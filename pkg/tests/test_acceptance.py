"""Acceptance criteria AC-01 .. AC-12, each at its stated tolerance.

Every test records one PASS/FAIL line (echoed in the terminal summary)
before asserting.
"""

from __future__ import annotations

import filecmp
from pathlib import Path

import numpy as np
import pytest

from conftest import record
from instances import all_families, rotating_randers, sample_conformal, sample_riemannian
from oracles import conformal_flow_oracle, ricci_oracle, riemannian_sample_exprs, separable_heat

from finslerlab import calculus as CA
from finslerlab import curvature as C
from finslerlab import estimates as E
from finslerlab import flow as FL
from finslerlab import heat as H
from finslerlab import metric as M
from finslerlab.cli import main as cli_main
from finslerlab.grid import ScalarField, TorusGrid, sample

# ---------------------------------------------------------------------------
# AC-01 metric algebra


def test_ac01_metric_algebra(rng):
    worst_euler, worst_leg = 0.0, 0.0
    for name, F in all_families().items():
        X = rng.uniform(0.0, 1.0, (1000, 2))
        Y = rng.normal(size=(1000, 2))
        F2 = M.eval_metric(F, X, Y) ** 2
        g = M.fundamental_tensor(F, X, Y)
        euler = np.abs(np.einsum("pij,pi,pj->p", g, Y, Y) - F2) / F2
        xi = rng.normal(size=(1000, 2))
        v = M.legendre_dual(F, X, xi)
        back = np.einsum("pij,pj->pi", M.fundamental_tensor(F, X, v), v)
        leg = np.max(np.linalg.norm(back - xi, axis=-1) / np.linalg.norm(xi, axis=-1))
        worst_euler = max(worst_euler, float(np.max(euler)))
        worst_leg = max(worst_leg, float(leg))
    ok = worst_euler <= 1e-10 and worst_leg <= 1e-8
    record("AC-01", ok, f"metric algebra: Euler rel err {worst_euler:.2e} (<=1e-10), Legendre round trip {worst_leg:.2e} (<=1e-8)")
    assert ok


# ---------------------------------------------------------------------------
# AC-02 Ricci tensor against the Christoffel oracle


def test_ac02_ricci_reduction():
    F = sample_riemannian()
    oracle = ricci_oracle(riemannian_sample_exprs())
    errs = []
    for m in (16, 32, 64):
        grid = TorusGrid(2, m)
        _, T = C.node_ricci(F, grid, np.tile([1.0, 0.0], (grid.size, 1)))
        errs.append(float(np.max(np.abs(T - oracle(grid.nodes())))))
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    ok = bool(np.all(orders >= 1.8))
    record("AC-02", ok, f"Ric_ij vs Christoffel oracle: errors {['%.3e' % e for e in errs]}, orders {np.round(orders, 3).tolist()} (>=1.8)")
    assert ok


# ---------------------------------------------------------------------------
# AC-03 vanishing S-curvature


def test_ac03_flat_s_curvature():
    grid = TorusGrid(2, 16)
    worst = 0.0
    cases = [(M.euclidean(2), C.lebesgue()), (sample_riemannian(), None)]
    for F, mu in cases:
        mu = C.riemannian_volume(F) if mu is None else mu
        tab = C.sample_curvature(F, mu, grid, 3.0)
        worst = max(worst, float(np.max(np.abs(tab.S))), float(np.max(np.abs(tab.Sdot))))
    ok = worst <= 1e-6
    record("AC-03", ok, f"vanishing S-curvature: max |S|, |S'| = {worst:.2e} (<=1e-6)")
    assert ok


# ---------------------------------------------------------------------------
# AC-04 Bochner identity and inequality


def test_ac04_bochner():
    F = sample_riemannian()
    mu = C.riemannian_volume(F)

    def u_fn(X):
        x, y = X[..., 0], X[..., 1]
        return np.sin(2 * np.pi * x) + 0.5 * np.cos(2 * np.pi * y) + 0.3 * np.sin(2 * np.pi * (x + y))

    res, margins = [], []
    for m in (16, 32, 64):
        r = CA.bochner_residual(F, mu, sample(TorusGrid(2, m), u_fn))
        res.append(r.max_residual)
        margins.append((r.min_margin, r.max_residual))
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    margin, tol = margins[-1]
    ok = bool(np.all(orders >= 0.9)) and margin >= -tol
    record("AC-04", ok, f"Bochner residual {['%.3g' % v for v in res]}, orders {np.round(orders, 3).tolist()} (>=0.9); "
           f"N=n margin {margin:.3g} >= -{tol:.3g}")
    assert ok


# ---------------------------------------------------------------------------
# AC-05 heat solver on a separable solution


def _separable_run(m, T):
    grid = TorusGrid(2, m)
    F = M.euclidean(2)
    dt = 0.5 * H.cfl_limit(F, grid)
    steps = int(np.ceil(T / dt))
    dt = T / steps
    u0 = sample(grid, lambda X: separable_heat(X, 0.0))
    traj = H.solve_heat(F, C.lebesgue(), u0, T, dt)
    err = float(np.max(np.abs(traj.u[-1] - separable_heat(grid.coords(), T))))
    return traj, err, steps


def test_ac05_heat_solver():
    T = 0.01
    coarse, err32, _ = _separable_run(32, T)
    fine, err64, steps = _separable_run(64, T)
    ratio = err32 / err64
    drift = max(abs(fine.mass(k) - fine.mass(0)) / abs(fine.mass(0)) for k in range(len(fine)))
    u0 = fine.u[0]
    rng_ = float(np.max(u0) - np.min(u0))
    minp = min(float(np.min(u)) - float(np.min(u0)) for u in fine.u)
    maxp = max(float(np.max(u)) - float(np.max(u0)) for u in fine.u)
    ok = err64 <= 5e-3 and ratio >= 3.5 and drift <= 1e-10 and minp >= -1e-8 * rng_ and maxp <= 1e-8 * rng_ and steps <= 500
    record("AC-05", ok, f"heat: err(m=64) {err64:.2e} (<=5e-3), refinement ratio {ratio:.3f} (>=3.5), "
           f"mass drift {drift:.1e} (<=1e-10), min-principle slack {minp:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# AC-06 Gaussian sharpness


def test_ac06_gaussian_sharpness():
    grid = TorusGrid(2, 64)
    h2 = grid.h**2
    bump = H.gaussian_bump(grid, tau0=h2)
    u0 = ScalarField(grid, bump.values + 1e-6 * float(np.max(bump.values)))
    dt = 0.1 * h2
    traj = H.solve_heat(M.euclidean(2), C.lebesgue(), u0, 400 * dt, dt, allow_small=True)
    res = E.gaussian_sharpness(traj)
    ok = 0.95 <= res["sup_ratio"] <= 1.0
    record("AC-06", ok, f"Gaussian sharpness: sup ratio {res['sup_ratio']:.4f} at {res['location']} (in [0.95, 1.0])")
    assert ok


# ---------------------------------------------------------------------------
# shared randers instance for AC-07 / AC-08

STATIC_STEPS = 400


@pytest.fixture(scope="module")
def randers_instance():
    F = rotating_randers()
    mu = C.lebesgue()
    N = 3.0
    cb = C.curvature_bounds(F, mu, TorusGrid(2, 32), N)
    K = min(cb.K, 0.0) * 1.05
    bounds = E.corollary_bounds(K, N)
    runs = {}
    for m in (32, 64):
        grid = TorusGrid(2, m)
        dt = 0.5 * H.cfl_limit(F, grid)
        runs[m] = H.solve_heat(F, mu, H.constant_plus_mode(grid), STATIC_STEPS * dt, dt)
    return F, cb, K, N, bounds, runs


def test_ac07_static_estimate(randers_instance):
    F, cb, K, N, bounds, runs = randers_instance
    conds = E.check_conditions_static(bounds, K, N, E.log_time_grid(float(runs[32].t[-1]), 200))
    coarse = E.verify_static_estimate(runs[32], bounds, K, N, curvature=cb)
    fine = E.verify_static_estimate(runs[64], bounds, K, N, curvature=cb)
    ratio = fine.tol_budget / coarse.tol_budget
    ok = conds.passed and coarse.passed and fine.passed and 0.45 <= ratio <= 0.55
    record("AC-07", ok, f"static estimate (randers |b|=0.3, K={K:.3f}, N=3): conditions {conds.passed}, "
           f"worst margin {coarse.worst_margin:.3g} <= budget {coarse.tol_budget:.3g}; "
           f"refined {fine.worst_margin:.3g} <= {fine.tol_budget:.3g}; budget ratio {ratio:.3f} (0.5 +- 10%)")
    assert ok


def test_ac08_static_harnack(randers_instance):
    F, _, _, _, bounds, runs = randers_instance
    traj = runs[32]
    quads = E.sample_quadruples(traj, 100, seed=11)
    rep = E.verify_harnack_static(traj, F, bounds, quads)
    ok = rep.passed and rep.details["zero_distance_pass"] and len(rep.rows) == 100
    record("AC-08", ok, f"static Harnack: 100 quadruples, worst log margin {rep.worst_margin:.3g} <= budget "
           f"{rep.tol_budget:.3g}; x=y branch worst {rep.details['zero_distance_worst']:.3g} (<=0)")
    assert ok


# ---------------------------------------------------------------------------
# AC-09 Ricci flow oracle


def test_ac09_ricci_flow_oracle():
    F0 = sample_conformal()
    T = 50 * FL.flow_limit(F0, TorusGrid(2, 32))
    fine_ref = TorusGrid(2, 128)
    ref = conformal_flow_oracle(F0.params["phi"].on_grid(fine_ref), 1.0, T, 400)
    devs = []
    for m, steps in ((32, 50), (64, 200)):
        grid = TorusGrid(2, m)
        Fk = F0
        for _ in range(steps):
            Fk = FL.flow_step(Fk, grid, T / steps)
        phi = Fk.node_params(grid)["phi"].reshape(grid.shape)
        devs.append(float(np.max(np.abs(phi - ref[:: 128 // m, :: 128 // m]))))
    grid = TorusGrid(2, 16)
    flat = M.euclidean(2)
    const_randers = M.randers(None, [0.2, 0.1])
    fl_flat = FL.solve_flow(flat, grid, C.lebesgue(), 1e-3, 5)
    fl_rand = FL.solve_flow(const_randers, grid, C.lebesgue(), 1e-3, 5)
    stationary = fl_flat.stationary and fl_rand.stationary and all(
        np.array_equal(fl_rand.metrics[k].node_params(grid)["b"], const_randers.node_params(grid)["b"]) for k in range(6)
    )
    ok = devs[0] <= 1e-3 and devs[1] < devs[0] and stationary
    record("AC-09", ok, f"Ricci flow vs scalar reduction: max dev {devs[0]:.2e} (m=32, <=1e-3), {devs[1]:.2e} (m=64); "
           f"flat/constant-randers stationary {stationary}")
    assert ok


# ---------------------------------------------------------------------------
# shared conformal flow for AC-10 / AC-11


@pytest.fixture(scope="module")
def conformal_flow():
    grid = TorusGrid(2, 32)
    F0 = sample_conformal()
    mu = C.lebesgue()
    dt_flow = FL.flow_limit(F0, grid)
    fl = FL.solve_flow(F0, grid, mu, dt_flow, 50)
    heat = FL.solve_heat_under_flow(fl, H.constant_plus_mode(grid), dt_flow)
    return fl, heat, E.make_bounds_flow("constant-theta", {"theta": 2.0})


def test_ac10_flow_estimate(conformal_flow):
    fl, heat, bounds = conformal_flow
    consts = E.flow_constants(fl)
    conds = E.check_conditions_flow(bounds, E.log_time_grid(float(heat.t[-1]), 200))
    nominal = E.verify_flow_estimate(fl, heat, bounds)
    strict = E.verify_flow_estimate(fl, heat, bounds, strict=True)
    ok = conds.passed and consts["C3"] > 0 and nominal.passed
    record("AC-10", ok, f"flow estimate (conformal, lebesgue, theta=2): C1={consts['C1']:.3g} C2={consts['C2']:.3g} "
           f"C3={consts['C3']:.3g}; nominal worst {nominal.worst_margin:.3g} <= {nominal.tol_budget:.3g}; "
           f"strict-2C1 worst {strict.worst_margin:.3g} (reported, pass={strict.passed})")
    assert ok


def test_ac11_flow_harnack(conformal_flow):
    fl, heat, bounds = conformal_flow
    rep = E.verify_harnack_flow(fl, heat, bounds, E.sample_quadruples(heat, 100, seed=5))
    # stationary degeneration: constant Randers metric
    grid = TorusGrid(2, 32)
    F = M.randers(None, [0.2, 0.1])
    mu = C.lebesgue()
    dt = 0.5 * H.cfl_limit(F, grid)
    sfl = FL.solve_flow(F, grid, mu, 10 * dt, 20)
    sheat = FL.solve_heat_under_flow(sfl, H.constant_plus_mode(grid), dt, stride=10)
    static = H.solve_heat(F, mu, H.constant_plus_mode(grid), float(sfl.t[-1]), dt, stride=10)
    quads = E.sample_quadruples(sheat, 100, seed=9)
    consts = E.flow_constants(sfl)
    r_flow = E.verify_harnack_flow(sfl, sheat, bounds, quads)
    r_static = E.verify_harnack_static(static, F, E.static_bounds_from_flow(bounds, consts, 2), quads)
    diff = max(abs(a[-1] - b[-1]) for a, b in zip(r_flow.rows, r_static.rows))
    ok = rep.passed and len(rep.rows) == 100 and diff <= 1e-10
    record("AC-11", ok, f"flow Harnack: 100 quadruples, worst {rep.worst_margin:.3g} <= {rep.tol_budget:.3g}; "
           f"stationary vs static max diff {diff:.1e} (<=1e-10)")
    assert ok


# ---------------------------------------------------------------------------
# AC-12 determinism

SCENARIO = """
seed: 42
grid: {n: 2, m: 16}
metric:
  family: randers
  b: [0.2, {modes: [[0.1, [0, 1], 0.0]]}]
initial: {family: random-positive, modes: 3, amplitude: 0.4}
time: {steps: 60}
harnack: {samples: 20}
checks: [curvature, heat, verify-static, verify-harnack]
output: {plots: false}
"""


def test_ac12_determinism(tmp_path: Path):
    scen = tmp_path / "scenario.yaml"
    scen.write_text(SCENARIO)
    codes = [cli_main(["all", "--scenario", str(scen), "--out", str(tmp_path / d)]) for d in ("a", "b")]
    names = sorted(p.name for p in (tmp_path / "a").glob("*.csv"))
    same = all(filecmp.cmp(tmp_path / "a" / n, tmp_path / "b" / n, shallow=False) for n in names)
    other = cli_main(["all", "--scenario", str(scen), "--out", str(tmp_path / "c"), "--seed", "43"])
    changed = not filecmp.cmp(tmp_path / "a" / "heat_trajectory.csv", tmp_path / "c" / "heat_trajectory.csv", shallow=False)
    ok = codes == [0, 0] and other == 0 and len(names) >= 5 and same and changed
    record("AC-12", ok, f"determinism: {len(names)} CSV files byte-identical across reruns {same}; new seed changes output {changed}")
    assert ok
