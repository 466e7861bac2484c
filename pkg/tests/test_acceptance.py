"""End-to-end acceptance checks.

Each test carries a ``criterion`` mark; the terminal summary prints one
PASS/FAIL line per criterion number.
"""

import math
import time

import numpy as np
import pytest

from tailfall import kernels
from tailfall.control import PhaseConfig, retraction_command
from tailfall.model import (
    SystemState,
    angular_momentum_about_com,
    build_planning_model,
    build_sim_model,
    com_position,
    com_velocity,
    forward_dynamics,
    inverse_dynamics,
    mass_matrix,
)
from tailfall.sim import Scenario, batch_run, orientation_grid, run_scenario
from tailfall.spatial import quat_exp
from tailfall.trajopt import LQProblem, SolverSettings, discretize, dynamics_derivatives, riccati_controls, solve

from .conftest import random_state

pytestmark = pytest.mark.slow
criterion = pytest.mark.criterion
TEN = math.radians(10.0)
FIVE = math.radians(5.0)


@pytest.fixture(scope="module")
def timed_nominal(nominal_scenario, params):
    t0 = time.perf_counter()
    sol, log, verdict = run_scenario(nominal_scenario, params, budget=0.4)
    return sol, log, verdict, time.perf_counter() - t0


# -- 1 ----------------------------------------------------------------------------------


@criterion(1, "reorientation from [15, 25, 35] deg at 1.85 m")
def test_c1_nominal_reorientation(timed_nominal):
    sol, log, verdict, elapsed = timed_nominal
    assert sol.N == 200
    eul = np.abs(verdict.touchdown_euler)
    print(f"touchdown euler (deg) {np.degrees(verdict.touchdown_euler).round(2)}; {elapsed:.1f} s")
    assert np.all(eul <= TEN)
    assert np.all(eul <= FIVE)
    assert elapsed < 60.0


# -- 2 ----------------------------------------------------------------------------------


@criterion(2, "1.4x tail mass in simulation")
def test_c2_tail_mass_error(timed_nominal, params):
    sol = timed_nominal[0]
    scen = Scenario.from_degrees(15.0, 25.0, 35.0, height=1.85, model_error={"tail_mass_scale": 1.4})
    _, log, verdict = run_scenario(scen, params, solution=sol)
    assert log.states.shape[1] == 19
    print(f"touchdown euler (deg) {np.degrees(verdict.touchdown_euler).round(2)}")
    assert np.all(np.abs(verdict.touchdown_euler) <= TEN)


# -- 3 ----------------------------------------------------------------------------------


@criterion(3, "consecutive motion from [40, 40, 30] deg")
def test_c3_consecutive_motion(params):
    _, _, verdict = run_scenario(Scenario.from_degrees(40.0, 40.0, 30.0, height=1.85), params)
    print(f"touchdown at {verdict.touchdown_time:.3f} s")
    assert verdict.touchdown_time == pytest.approx(0.56, abs=0.10)
    assert verdict.success, verdict.reasons


# -- 4 ----------------------------------------------------------------------------------


@criterion(4, "hardware configuration [0, 30, 30] deg at 1 m with ablation")
@pytest.mark.parametrize("config", [None, PhaseConfig.early_retraction()], ids=["auto", "early"])
def test_c4_short_drop_succeeds(params, config):
    _, _, verdict = run_scenario(Scenario.from_degrees(0.0, 30.0, 30.0, height=1.0), params, config=config)
    assert verdict.success, verdict.reasons


@criterion(4, "hardware configuration [0, 30, 30] deg at 1 m with ablation")
def test_c4_short_drop_without_retraction_fails(params):
    scen = Scenario.from_degrees(0.0, 30.0, 30.0, height=1.0, controller="no_retract")
    _, _, verdict = run_scenario(scen, params)
    assert not verdict.success


# -- 5 ----------------------------------------------------------------------------------


@criterion(5, "solver budget on the criterion-1 plan")
def test_c5_solver_budget(nominal_solution):
    sol = nominal_solution
    assert sol.converged, sol.message
    assert sol.iterations <= 400
    assert sol.stationarity <= 1e-3
    hist = np.asarray(sol.cost_history)
    outer = np.asarray(sol.outer_history)
    for o in np.unique(outer):
        seg = hist[outer == o]
        assert np.all(np.diff(seg) <= 1e-12 * np.abs(seg).max())


# -- 6 ----------------------------------------------------------------------------------


@criterion(6, "flight conservation over 20 random rollouts")
def test_c6_conservation_suite(sim_model):
    rng = np.random.default_rng(6)
    dt, steps, g = 0.001, 400, sim_model.params.gravity
    t0 = time.perf_counter()
    for _ in range(20):
        x = SystemState.at_rest(sim_model, p=(0, 0, 1.85), quat=quat_exp(rng.uniform(-0.6, 0.6, 3))).to_vector()
        x[7:9] = rng.uniform(-0.5, 0.5, 2)
        x[9] = rng.uniform(0.2, 0.45)
        x[10:13] = 0.3 * rng.normal(size=3)
        x[13:18] = 0.5 * rng.normal(size=5)
        c0, v0 = com_position(sim_model, x), com_velocity(sim_model, x)
        h0 = angular_momentum_about_com(sim_model, x)
        z = [c0[2]]
        for k in range(steps):
            if k % 20 == 0:
                tau = np.r_[rng.uniform(-6.0, 6.0, 2), 0.0]
            x = discretize(sim_model, x, tau, dt)
            z.append(com_position(sim_model, x)[2])
        t = dt * np.arange(steps + 1)
        assert np.max(np.abs(np.array(z) - (c0[2] + v0[2] * t - 0.5 * g * t * t))) < 1e-9
        h = angular_momentum_about_com(sim_model, x)
        assert np.linalg.norm(h - h0) < 1e-3 * np.linalg.norm(h0)
    assert time.perf_counter() - t0 < 10.0


# -- 7 ----------------------------------------------------------------------------------


@criterion(7, "dynamics oracles")
@pytest.mark.parametrize("builder", [build_planning_model, build_sim_model], ids=["plan", "sim"])
def test_c7_forward_inverse_round_trip(builder, params):
    model = builder(params)
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = random_state(rng, model, speed=2.0)
        tau = rng.uniform(-6, 6, size=model.n_joints)
        gen = inverse_dynamics(model, x, forward_dynamics(model, x, tau))
        assert np.all(np.abs(gen - np.r_[np.zeros(6), tau]) <= 1e-9 * max(1.0, np.abs(tau).max()))


@criterion(7, "dynamics oracles")
def test_c7_mass_matrix(sim_model):
    rng = np.random.default_rng(77)
    for _ in range(1000):
        M = mass_matrix(sim_model, random_state(rng, sim_model))
        assert np.allclose(M, M.T, rtol=0, atol=1e-14)
        assert np.linalg.eigvalsh(M).min() > 0


@criterion(7, "dynamics oracles")
@pytest.mark.parametrize("builder", [build_planning_model, build_sim_model], ids=["plan", "sim"])
def test_c7_richardson_jacobians(builder, params):
    model = builder(params)
    nj, ndx = model.n_joints, model.ndx
    rng = np.random.default_rng(777)
    dt = 0.002
    for _ in range(3):
        x = random_state(rng, model)
        tau = rng.uniform(-6, 6, size=nj)
        A, B = dynamics_derivatives(model, x, tau, dt)
        y0 = discretize(model, x, tau, dt)

        def dA(h):
            cols = []
            for i in range(ndx):
                e = np.zeros(ndx)
                e[i] = h
                yp = discretize(model, kernels.retract(nj, x, e), tau, dt)
                ym = discretize(model, kernels.retract(nj, x, -e), tau, dt)
                cols.append((kernels.difference(nj, yp, y0) - kernels.difference(nj, ym, y0)) / (2 * h))
            return np.column_stack(cols)

        def dB(h):
            cols = []
            for j in range(nj):
                e = np.zeros(nj)
                e[j] = h
                yp = discretize(model, x, tau + e, dt)
                ym = discretize(model, x, tau - e, dt)
                cols.append((kernels.difference(nj, yp, y0) - kernels.difference(nj, ym, y0)) / (2 * h))
            return np.column_stack(cols)

        for J, fd, h in ((A, dA, 1e-4), (B, dB, 1e-3)):
            ref = (4 * fd(h / 2) - fd(h)) / 3
            assert np.all(np.abs(J - ref) <= 1e-6 * np.maximum(1.0, np.abs(ref)))


# -- 8 ----------------------------------------------------------------------------------


@criterion(8, "retraction ramp 0.49 to 0.12 m at 2 m/s")
def test_c8_ramp_profile():
    cfg = PhaseConfig()
    t = np.arange(0.0, 0.3, 1e-5)
    cmd = np.array([retraction_command(s, cfg) for s in t])
    done = t[np.argmax(cmd <= cfg.tail_length_min)]
    assert done == pytest.approx(0.185, abs=1e-3)
    assert cmd.min() >= 0.12 and cmd.max() <= 0.49
    assert np.allclose(np.diff(cmd[t < 0.18]) / 1e-5, -2.0)


@criterion(8, "retraction ramp 0.49 to 0.12 m at 2 m/s")
def test_c8_ramp_in_simulation(nominal_run):
    _, log, _ = nominal_run
    cmd = log.tail_length_cmd
    assert cmd.min() >= 0.12 - 1e-12 and cmd.max() <= 0.49 + 1e-12
    end = log.t[np.argmax(cmd <= 0.12 + 1e-12)]
    assert end - log.retract_time == pytest.approx(0.185, abs=1e-3)


# -- 9 ----------------------------------------------------------------------------------


@pytest.fixture(scope="module")
def grid_runs(params):
    t0 = time.perf_counter()
    first = batch_run(orientation_grid(), params, jobs=4)
    second = batch_run(orientation_grid(), params, jobs=4)
    return first, second, time.perf_counter() - t0


@criterion(9, "27-scenario orientation sweep")
def test_c9_batch_sweep(grid_runs):
    first, second, elapsed = grid_runs
    print(f"{first.n_success}/27 successes; two sweeps in {elapsed:.0f} s")
    failed = [(r.scenario.euler_deg, r.verdict.failure_reason if r.verdict else r.error) for r in first.rows if not r.success]
    assert first.n_success >= 25, failed
    assert first.to_dict() == second.to_dict()
    assert elapsed / 2 < 15 * 60


def test_grid_penetration_and_ablation_ordering(grid_runs, params):
    first = grid_runs[0]
    assert max(r.verdict.max_penetration for r in first.rows) < 0.01
    ablation = batch_run(orientation_grid(controller="no_retract"), params, jobs=4)
    with_retract = {r.scenario.euler for r in first.rows if r.success}
    without = {r.scenario.euler for r in ablation.rows if r.success}
    assert without <= with_retract


# -- 10 ---------------------------------------------------------------------------------


@criterion(10, "LQR oracle")
@pytest.mark.parametrize("x0", [[1.0, -0.5, 0.2, 0.3], [-2.0, 0.0, 0.0, 1.5]])
def test_c10_lqr_oracle(x0):
    prob = LQProblem(np.array(x0))
    sol = solve(prob, SolverSettings(stationarity_tolerance=1e-9))
    assert np.max(np.abs(sol.U - riccati_controls(prob))) <= 1e-6
