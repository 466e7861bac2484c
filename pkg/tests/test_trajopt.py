import math

import numpy as np
import pytest

from tailfall import kernels
from tailfall.model import SystemState
from tailfall.spatial import IDENTITY, attitude_error, quat_exp, quat_from_euler
from tailfall.trajopt import (
    DivergenceError,
    LQProblem,
    OCProblem,
    SolverSettings,
    discretize,
    dynamics_derivatives,
    riccati_controls,
    solve,
    stage_cost,
    terminal_cost,
)
from tailfall.trajopt.ddp import _adjoint_gradient

from .conftest import random_state


def _state(model, quat=IDENTITY, z=1.85):
    return SystemState.at_rest(model, p=(0.0, 0.0, z), quat=quat).to_vector()


# -- discretization ---------------------------------------------------------------


def test_free_fall_one_step(plan_model):
    x1 = discretize(plan_model, _state(plan_model), [0.0, 0.0], 0.002)
    assert x1[2] == pytest.approx(1.85 - 0.5 * 9.81 * 0.002**2, abs=1e-15)
    assert x1[11] == pytest.approx(-9.81 * 0.002, abs=1e-15)
    assert np.allclose(x1[3:7], IDENTITY, atol=1e-15)


def test_free_fall_two_hundred_steps(plan_model):
    x = _state(plan_model)
    for _ in range(200):
        x = discretize(plan_model, x, [0.0, 0.0], 0.002)
    assert x[2] == pytest.approx(1.0652, abs=1e-9)


def test_step_halving_converges(plan_model, rng):
    x0 = random_state(rng, plan_model, speed=1.0)
    tau = np.array([1.0, -0.5])
    a, b = x0.copy(), x0.copy()
    for _ in range(50):
        a = discretize(plan_model, a, tau, 0.002)
    for _ in range(100):
        b = discretize(plan_model, b, tau, 0.001)
    # fourth order: the coarse solution is already close to the fine one
    assert np.max(np.abs(a - b)) < 1e-7
    z0 = _state(plan_model)
    c, d = z0.copy(), z0.copy()
    for _ in range(200):
        c = discretize(plan_model, c, [0, 0], 0.002)
    for _ in range(400):
        d = discretize(plan_model, d, [0, 0], 0.001)
    assert np.max(np.abs(c - d)) < 1e-10


def test_discretize_rejects_bad_dt(plan_model):
    with pytest.raises(ValueError):
        discretize(plan_model, _state(plan_model), [0, 0], 0.0)


# -- costs --------------------------------------------------------------------------


def test_terminal_cost_half_turn(plan_model):
    prob = OCProblem(plan_model, _state(plan_model))
    x = _state(plan_model, quat=quat_exp([0, 0, math.pi]))
    assert terminal_cost(x, prob) == pytest.approx(1000.0, abs=1e-9)
    assert terminal_cost(_state(plan_model), prob) == 0.0


def test_stage_cost_components(plan_model, rng):
    prob = OCProblem(plan_model, _state(plan_model))
    x = random_state(rng, plan_model)
    tau = np.array([2.0, -3.0])
    uf = x[9:]
    expected = (
        attitude_error(IDENTITY, x[3:7]) + 0.5 * np.sum(prob.Q_uf * uf * uf) + 0.5 * np.sum(prob.R_tau * tau * tau)
    )
    assert stage_cost(x, tau, prob) == pytest.approx(expected, rel=1e-13)
    assert prob.Q_uf[3] == 1e-3 and prob.Q_uf[6] == 1e-4 and prob.R_tau[0] == 1e-3


def test_cost_gradient_matches_finite_differences(plan_model, rng):
    prob = OCProblem(plan_model, _state(plan_model), N=3)
    X = np.array([random_state(rng, plan_model) for _ in range(4)])
    U = rng.normal(size=(3, 2))
    lx, lu, *_, Vx, _ = prob.cost_derivatives(X, U)
    h = 1e-6
    for i in range(16):
        dx = np.zeros(16)
        dx[i] = h
        xp = kernels.retract(2, X[1], dx)
        xm = kernels.retract(2, X[1], -dx)
        Xp, Xm = X.copy(), X.copy()
        Xp[1], Xm[1] = xp, xm
        num = (prob.total_cost(Xp, U) - prob.total_cost(Xm, U)) / (2 * h)
        assert num == pytest.approx(lx[1, i], abs=1e-7)


def test_problem_validation(plan_model):
    x0 = _state(plan_model)
    with pytest.raises(ValueError):
        OCProblem(plan_model, x0, N=0)
    with pytest.raises(ValueError):
        OCProblem(plan_model, x0, Q_uf=np.ones(8))
    with pytest.raises(ValueError):
        OCProblem(plan_model, x0, R_tau=[-1.0, 0.0])
    with pytest.raises(ValueError):
        OCProblem(plan_model, np.zeros(19))


# -- derivatives --------------------------------------------------------------------


def test_jacobians_against_richardson_extrapolation(plan_model, rng):
    x = random_state(rng, plan_model)
    tau = np.array([1.5, -2.0])
    dt = 0.002
    A, B = dynamics_derivatives(plan_model, x, tau, dt)
    y0 = discretize(plan_model, x, tau, dt)

    def central(h):
        cols = []
        for i in range(16):
            dx = np.zeros(16)
            dx[i] = h
            yp = discretize(plan_model, kernels.retract(2, x, dx), tau, dt)
            ym = discretize(plan_model, kernels.retract(2, x, -dx), tau, dt)
            cols.append((kernels.difference(2, yp, y0) - kernels.difference(2, ym, y0)) / (2 * h))
        return np.column_stack(cols)

    ref = (4 * central(5e-5) - central(1e-4)) / 3
    assert np.allclose(A, ref, atol=1e-6)
    # torque enters through the tail rates; positions move only at second order
    assert np.allclose(B[:3], 0.0, atol=1e-4)
    assert np.abs(B[14:16]).max() > 1e-3


# -- solver -------------------------------------------------------------------------


def test_lq_matches_riccati():
    prob = LQProblem(np.array([1.0, -0.5, 0.2, 0.3]))
    sol = solve(prob, SolverSettings(stationarity_tolerance=1e-9))
    assert sol.converged
    assert np.allclose(sol.U, riccati_controls(prob), atol=1e-6)
    assert sol.iterations <= 2


def test_lq_problem_validation():
    with pytest.raises(ValueError):
        LQProblem(np.zeros(3))


def test_goal_is_a_fixed_point(plan_model):
    prob = OCProblem(plan_model, _state(plan_model), N=50)
    sol = solve(prob)
    assert sol.converged
    assert sol.iterations <= 2
    assert sol.objective < 1e-8


def test_half_turn_warns(plan_model):
    prob = OCProblem(plan_model, _state(plan_model, quat=quat_exp([math.pi, 0, 0])), N=20)
    with pytest.warns(UserWarning, match="half-turn"):
        solve(prob, SolverSettings(max_iterations=3))


def test_divergent_rollout_raises(plan_model):
    prob = OCProblem(plan_model, _state(plan_model), N=10)
    with pytest.raises(DivergenceError, match="iteration 0"):
        solve(prob, initial_controls=np.full((10, 2), 1e308))


@pytest.mark.parametrize(
    "bad",
    [dict(max_iterations=0), dict(reg_growth=1.0), dict(line_search_factor=1.0), dict(barrier_relaxation=0.0)],
)
def test_settings_validation(bad):
    with pytest.raises(ValueError):
        SolverSettings(**bad)


def test_adjoint_gradient_matches_finite_differences(plan_model):
    x0 = _state(plan_model, quat=quat_from_euler(0.2, 0.3, -0.4))
    prob = OCProblem(plan_model, x0, N=8, torque_box=False, workspace_cone=False)
    rng = np.random.default_rng(3)
    U = rng.normal(size=(8, 2))
    X = prob.rollout(U)
    A, B = prob.linearize(X, U)
    lx, lu, _, _, _, Vx, _ = prob.cost_derivatives(X, U)
    g = _adjoint_gradient(A, B, lx, lu, Vx)
    h = 1e-6
    for k in (0, 4, 7):
        for j in range(2):
            Up, Um = U.copy(), U.copy()
            Up[k, j] += h
            Um[k, j] -= h
            num = (prob.total_cost(prob.rollout(Up), Up) - prob.total_cost(prob.rollout(Um), Um)) / (2 * h)
            assert num == pytest.approx(g[k, j], rel=1e-5, abs=1e-6)


@pytest.mark.slow
class TestNominalPlan:
    def test_converges_with_feasible_trajectory(self, nominal_solution, plan_model):
        sol = nominal_solution
        assert sol.converged, sol.message
        lo, hi = plan_model.torque_limits
        assert sol.U.min() >= lo - 1e-4 and sol.U.max() <= hi + 1e-4
        assert sol.path_violation <= 1e-4
        assert attitude_error(IDENTITY, sol.X[-1][3:7]) < 1e-2

    def test_states_are_the_rollout_of_the_controls(self, nominal_solution, nominal_scenario, plan_model):
        prob = OCProblem(plan_model, nominal_solution.X[0], N=nominal_solution.N, dt=nominal_solution.dt)
        assert np.array_equal(prob.rollout(nominal_solution.U), nominal_solution.X)

    def test_cost_decreases_within_each_outer_segment(self, nominal_solution):
        hist = np.asarray(nominal_solution.cost_history)
        outer = np.asarray(nominal_solution.outer_history)
        for o in np.unique(outer):
            seg = hist[outer == o]
            assert np.all(np.diff(seg) <= 1e-12 * np.abs(seg[:-1]).max())

    def test_gains_are_bounded(self, nominal_solution):
        assert np.isfinite(nominal_solution.K).all()
        assert np.abs(nominal_solution.K).max() < 1e4
