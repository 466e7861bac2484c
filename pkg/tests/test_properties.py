import math

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from tailfall.control import (
    PhaseConfig,
    TrackingPolicy,
    retraction_command,
    retraction_force,
    stance_control,
    tracking_control,
)
from tailfall.model import RobotParams, build_planning_model
from tailfall.sim import ContactModel, contact_force
from tailfall.spatial import (
    attitude_error,
    euler_from_quat,
    quat_box_minus,
    quat_box_plus,
    quat_distance,
    quat_exp,
    quat_from_euler,
    quat_log,
    rotation_from_quat,
)

from .conftest import random_state

finite = st.floats(-1e3, 1e3, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
small_vec3 = st.tuples(*[st.floats(-3.0, 3.0)] * 3).map(np.array)
quats = (
    st.tuples(*[st.floats(-1.0, 1.0)] * 4)
    .map(np.array)
    .filter(lambda q: np.linalg.norm(q) > 0.1)
    .map(lambda q: q / np.linalg.norm(q))
)


@given(small_vec3.filter(lambda v: np.linalg.norm(v) < math.pi - 1e-3))
def test_exp_log_round_trip(phi):
    # inside the principal ball log(exp(phi)) is phi itself
    assert np.allclose(quat_log(quat_exp(phi)), phi, atol=1e-9)


@given(quats)
def test_log_exp_round_trip(q):
    assert quat_distance(quat_exp(quat_log(q)), q) < 1e-9
    assert np.linalg.norm(quat_log(q)) <= math.pi + 1e-12


@given(quats, small_vec3)
def test_box_plus_minus(q, d):
    assert quat_distance(quat_box_plus(q, quat_box_minus(quat_box_plus(q, d), q)), quat_box_plus(q, d)) < 1e-9


@given(quats)
def test_rotation_is_orthonormal(q):
    R = rotation_from_quat(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert abs(np.linalg.det(R) - 1.0) < 1e-12


@given(quats, quats)
def test_attitude_error_bounds_and_symmetry(a, b):
    e = attitude_error(a, b)
    assert -1e-12 <= e <= 2.0 + 1e-12
    assert abs(e - attitude_error(b, a)) < 1e-12
    assert attitude_error(a, a) < 1e-12
    # 0.5 tr(I - R) = 1 - cos(angle)
    ang = np.linalg.norm(quat_box_minus(b, a))
    assert abs(e - (1.0 - math.cos(ang))) < 1e-9


@given(st.floats(-3.0, 3.0), st.floats(-1.5, 1.5), st.floats(-3.0, 3.0))
def test_euler_round_trip(yaw, pitch, roll):
    out = euler_from_quat(quat_from_euler(yaw, pitch, roll))
    assert np.allclose(out, [yaw, pitch, roll], atol=1e-7)


@given(st.lists(st.floats(-0.2, 1.0), min_size=2, max_size=50), st.floats(0.0, 0.6))
def test_retraction_command_stays_in_range_and_rate(times, start):
    cfg = PhaseConfig()
    ts = np.sort(np.asarray(times))
    cmds = np.array([retraction_command(t, cfg, start) for t in ts])
    assert np.all(cmds >= cfg.tail_length_min) and np.all(cmds <= cfg.tail_length_max)
    dt = np.diff(ts)
    dl = np.diff(cmds)
    assert np.all(dl <= 0)
    assert np.all(-dl <= cfg.retraction_speed * dt + 1e-9)


@given(st.floats(0.12, 0.49), st.floats(-5.0, 5.0), st.floats(0.12, 0.49))
def test_retraction_force_saturates(ell, ell_dot, cmd):
    cfg = PhaseConfig()
    assert abs(retraction_force(ell, ell_dot, cmd, cfg)) <= cfg.retraction_force_limit


@given(vec3, vec3, st.floats(0.1, 1.5))
def test_contact_force_respects_the_cone(pos, vel, mu):
    f = contact_force(pos, vel, ContactModel(friction=mu))
    assert f[2] >= 0.0
    assert math.hypot(f[0], f[1]) <= mu * f[2] * (1 + 1e-12) + 1e-9
    if pos[2] > 0:
        assert not f.any()
    # friction never pushes along the sliding direction
    assert f[0] * vel[0] + f[1] * vel[1] <= 1e-9


@given(
    st.lists(st.floats(0.0, 0.4), min_size=4, max_size=4),
    st.lists(st.floats(-10.0, 10.0), min_size=4, max_size=4),
)
def test_stance_forces_are_bounded_and_compressive(lengths, rates):
    cfg = PhaseConfig()
    f = stance_control(None, lengths, rates, cfg)
    assert np.all(f >= 0.0) and np.all(f <= cfg.stance_max_force)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.0, 1e3))
def test_tracking_torque_stays_in_the_box(seed, gain):
    rng = np.random.default_rng(seed)
    model = build_planning_model(RobotParams())
    X = np.array([random_state(rng, model) for _ in range(4)])
    pol = TrackingPolicy(X, rng.uniform(-9, 9, (3, 2)), gain * rng.normal(size=(3, 2, 16)), 0.002, -6.0, 6.0)
    tau = tracking_control(rng.uniform(-0.01, 0.02), random_state(rng, model), pol).tau
    assert np.all(tau >= -6.0) and np.all(tau <= 6.0)
