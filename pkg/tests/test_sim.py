import math

import numpy as np
import pytest

from tailfall.control import Phase, PhaseConfig
from tailfall.sim import (
    ContactModel,
    ModelErrorSpec,
    Scenario,
    SimulationError,
    _Plant,
    angular_momentum_trace,
    batch_run,
    contact_force,
    detect_contact,
    first_acceleration_jump,
    inject_model_error,
    orientation_grid,
    planning_budget,
    run_scenario,
    score_landing,
    simulate,
    touchdown_height,
    zero_solution,
)
from tailfall.model import com_position
from tailfall.spatial import IDENTITY

K30 = ContactModel(stiffness=30000.0)


class TestContactForce:
    def test_static_penetration(self):
        assert contact_force([0, 0, -0.01], [0, 0, 0], K30) == pytest.approx([0, 0, 300.0])

    def test_damping_adds_when_entering(self):
        assert contact_force([0, 0, -0.01], [0, 0, -0.1], K30)[2] == pytest.approx(400.0)

    def test_no_pulling_force(self):
        assert np.array_equal(contact_force([0, 0, -0.001], [0, 0, 5.0], K30), np.zeros(3))

    def test_above_ground_is_zero(self):
        assert np.array_equal(contact_force([0, 0, 0.02], [1, 1, -1], K30), np.zeros(3))

    def test_friction_cone_caps_tangential(self):
        f = contact_force([0, 0, -0.01], [1.0, 0, 0], K30)
        assert f == pytest.approx([-240.0, 0.0, 300.0])
        slow = contact_force([0, 0, -0.01], [0.0, 0.01, 0], K30)
        assert slow == pytest.approx([0.0, -20.0, 300.0])

    def test_stacked_points(self):
        F = contact_force([[0, 0, -0.01], [0, 0, 0.1]], np.zeros((2, 3)), K30)
        assert F.shape == (2, 3) and F[1, 2] == 0 and F[0, 2] == pytest.approx(300)

    def test_rejects_nonpositive_parameters(self):
        with pytest.raises(ValueError):
            ContactModel(friction=0.0)


class TestDetection:
    def test_geometric(self):
        assert detect_contact([0.01, -0.0005, -0.002, -0.01]).tolist() == [False, False, True, True]

    def test_acceleration_jump(self):
        assert detect_contact(None, accel_z=[-9.81, -9.81]) is False
        assert detect_contact(None, accel_z=[-9.81, 40.0]) is True
        assert detect_contact(None, accel_z=[-9.81, 0.0], accel_threshold=5.0) is True
        assert first_acceleration_jump([-9.81] * 5 + [50.0, 60.0]) == 5
        assert first_acceleration_jump([-9.81] * 5) is None


class TestModelError:
    def test_tail_mass_scale(self, sim_model):
        m = inject_model_error(sim_model, ModelErrorSpec(tail_mass_scale=1.4))
        assert m.params.tail_mass == pytest.approx(1.75)
        assert sim_model.params.tail_mass == 1.25

    def test_inertia_scale(self, sim_model):
        m = inject_model_error(sim_model, {"body_inertia_scale": 1.2})
        assert m.params.body_inertia == pytest.approx((0.144, 0.468, 0.54))

    def test_identity_returns_sim_model(self, plan_model, sim_model):
        assert inject_model_error(sim_model, None) is sim_model
        assert inject_model_error(plan_model, None).n_joints == 3

    def test_rejects_nonpositive_scale(self):
        with pytest.raises(ValueError):
            ModelErrorSpec(tail_mass_scale=0.0)


class TestScenario:
    def test_degrees_round_trip(self):
        s = Scenario.from_degrees(15.0, 25.0, 35.0)
        assert s.euler_deg == (15.0, 25.0, 35.0)
        assert s.to_dict()["euler_deg"] == [15.0, 25.0, 35.0]

    def test_initial_state(self, plan_model, sim_model):
        s = Scenario(height=1.5)
        xp = s.initial_state(plan_model)
        xs = s.initial_state(sim_model)
        assert xp.shape == (17,) and xs.shape == (19,)
        assert xs[2] == 1.5 and xs[9] == 0.49
        assert np.array_equal(xs[3:7], IDENTITY)

    @pytest.mark.parametrize("bad", [dict(height=0.0), dict(friction=-1.0), dict(dt=0.0), dict(controller="pid")])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            Scenario(**bad)


def test_touchdown_height_and_budget(params):
    assert touchdown_height(params) == pytest.approx(0.27)
    b = planning_budget(Scenario(height=1.85), params, PhaseConfig())
    t_td = math.sqrt(2 * (1.85 - 0.27) / 9.81)
    assert b == pytest.approx(t_td - 0.185 - 0.05)
    assert planning_budget(Scenario(), params, PhaseConfig(), 0.3) == 0.3


# -- full drops ---------------------------------------------------------------------


@pytest.fixture(scope="module")
def level_drop(params):
    scen = Scenario()
    return scen, simulate(scen, zero_solution(params, scen), params)


def test_level_drop_lands_level(level_drop):
    _, log = level_drop
    v = score_landing(log)
    assert v.success, v.reasons
    # retraction through the raised mount tips the body slightly; the servo holds it
    flight = log.t < log.touchdown_time
    assert np.abs(log.euler()[flight]).max() < 0.02


def test_level_drop_with_tail_held_stays_level(params):
    scen = Scenario(controller="no_retract")
    log = simulate(scen, zero_solution(params, scen), params)
    flight = log.t < log.touchdown_time
    assert np.abs(log.euler()[flight]).max() < 1e-6
    h = angular_momentum_trace(log, params)[flight]
    assert np.abs(h).max() < 1e-6


def test_level_drop_has_no_horizontal_com_drift_in_flight(level_drop, sim_model):
    _, log = level_drop
    flight = log.t < log.touchdown_time
    c = np.array([com_position(sim_model, x) for x in log.states[flight]])
    assert np.max(np.abs(c[:, :2] - c[0, :2])) < 1e-9


def test_simulation_is_deterministic(level_drop, params):
    scen, log = level_drop
    again = simulate(scen, zero_solution(params, scen), params)
    assert np.array_equal(log.states, again.states)
    assert np.array_equal(log.foot_forces, again.foot_forces)


def test_settled_load_equals_weight(level_drop, params):
    _, log = level_drop
    fz = log.foot_forces[-1, :, 2].sum()
    assert fz == pytest.approx(params.total_mass * params.gravity, rel=0.01)


@pytest.mark.slow
class TestNominalLog:
    def test_flight_conserves_angular_momentum(self, nominal_run, params):
        _, log, _ = nominal_run
        flight = log.t < log.touchdown_time - 1e-9
        h = angular_momentum_trace(log, params)[flight]
        assert np.max(np.abs(h - h[0])) < 1e-6

    def test_contact_forces_obey_the_cone(self, nominal_run):
        _, log, _ = nominal_run
        F = log.foot_forces
        assert F[..., 2].min() >= 0.0
        tang = np.linalg.norm(F[..., :2], axis=-1)
        assert np.all(tang <= log.scenario["friction"] * F[..., 2] + 1e-9)

    def test_phases_only_move_forward(self, nominal_run):
        _, log, _ = nominal_run
        assert np.all(np.diff(log.phase) >= 0)
        assert [p for _, p in log.phase_transitions()] == [Phase.FLIGHT_REORIENT, Phase.FLIGHT_RETRACT, Phase.STANCE]

    def test_tail_length_command_never_grows_after_trigger(self, nominal_run):
        _, log, _ = nominal_run
        after = log.t >= log.retract_time
        assert np.all(np.diff(log.tail_length_cmd[after]) <= 0)
        assert log.tail_length_cmd[-1] == pytest.approx(0.12)

    def test_retracts_before_touchdown(self, nominal_run):
        _, log, _ = nominal_run
        assert log.retract_time < log.touchdown_time
        assert not log.early_touchdown


def test_nonfinite_state_raises_with_partial_log(params, monkeypatch):
    scen = Scenario(height=1.0)
    sol = zero_solution(params, scen)
    real_step = _Plant.step
    calls = {"n": 0}

    def flaky(self, x, L, tau, dt, stance):
        calls["n"] += 1
        if calls["n"] == 50:
            return np.full_like(x, np.nan), L
        return real_step(self, x, L, tau, dt, stance)

    monkeypatch.setattr(_Plant, "step", flaky)
    with pytest.raises(SimulationError) as err:
        simulate(scen, sol, params)
    log = err.value.log
    assert log.aborted and log.n_ticks == 50
    assert "non-finite" in log.message
    assert "aborted" in score_landing(log).reasons


def test_feedforward_controller_runs(params):
    scen = Scenario(controller="feedforward", height=1.0)
    log = simulate(scen, zero_solution(params, scen), params)
    assert log.touchdown_time is not None


# -- batches -------------------------------------------------------------------------


def test_orientation_grid():
    g = orientation_grid()
    assert len(g) == 27
    assert g[0].euler_deg == (-30.0, -30.0, -30.0)
    assert g[13].euler_deg == (0.0, 0.0, 0.0)


@pytest.fixture(scope="module")
def small_grid():
    return [Scenario.from_degrees(0, 0, 0), Scenario.from_degrees(0, 8.0, 0), Scenario.from_degrees(5.0, 0, -6.0)]


@pytest.mark.slow
def test_batch_matches_single_runs_in_any_order(small_grid, params):
    fwd = batch_run(small_grid, params)
    rev = batch_run(small_grid[::-1], params, jobs=2)
    assert [r.to_dict() for r in fwd.rows] == [r.to_dict() for r in rev.rows[::-1]]
    _, _, v = run_scenario(small_grid[1], params)
    assert fwd.rows[1].verdict.to_dict() == v.to_dict()


def test_all_zero_grid_succeeds(params):
    summary = batch_run(orientation_grid((0.0,)), params)
    assert summary.success_rate == 1.0
    assert summary.to_dict()["n_scenarios"] == 1


def test_empty_grid_rejected():
    with pytest.raises(ValueError):
        batch_run([])
