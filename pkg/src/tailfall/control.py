"""Runtime controllers and the flight/stance phase machine."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from enum import IntEnum
from typing import NamedTuple

import numpy as np

from .spatial import IDENTITY, attitude_error, normalize, quat_box_minus, quat_box_plus


class Phase(IntEnum):
    FLIGHT_REORIENT = 0
    FLIGHT_RETRACT = 1
    STANCE = 2


@dataclass(frozen=True)
class PhaseConfig:
    """Thresholds and gains for the phase machine and its controllers.

    ``trigger_height`` is ``h_s``: the body height below which the tail is
    retracted regardless of attitude. ``None`` means "derive it from the drop
    height" (see :func:`trigger_height`).
    """

    attitude_tolerance: float = 0.015
    trigger_height: float | None = None
    flight_budget: float = 0.4
    retraction_speed: float = 2.0
    retraction_margin: float = 0.05
    min_reorient_time: float = 0.25
    retraction_force_limit: float = 300.0
    retraction_kp: float = 4000.0
    retraction_kd: float = 120.0
    tail_length_min: float = 0.12
    tail_length_max: float = 0.49
    hold_kp: float = 60.0
    hold_kd: float = 3.0
    attitude_gain: float = 8.0
    attitude_rate_gain: float = 6.0
    stance_stiffness: float = 5000.0
    stance_damping: float = 300.0
    stance_angular_damping: float = 300.0
    stance_max_force: float = 600.0
    contact_tolerance: float = 0.001
    accel_jump_threshold: float = 30.0
    desired_quat: tuple = tuple(IDENTITY)

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name in ("desired_quat", "trigger_height"):
                continue
            if f.name == "retraction_margin" and isinstance(v, (int, float)) and v == 0:
                continue
            if not (isinstance(v, (int, float)) and v > 0):
                raise ValueError(f"PhaseConfig.{f.name} must be positive, got {v!r}")
        if self.trigger_height is not None and not self.trigger_height > 0:
            raise ValueError("trigger_height must be positive")
        if not self.tail_length_min < self.tail_length_max:
            raise ValueError("tail_length_min must be below tail_length_max")
        q = np.asarray(self.desired_quat, dtype=float)
        if q.shape != (4,):
            raise ValueError("desired_quat must have 4 entries")
        object.__setattr__(self, "desired_quat", tuple(normalize(q)))

    @classmethod
    def early_retraction(cls, **overrides) -> PhaseConfig:
        """Schedule for short drops: the ramp ends exactly at touchdown.

        Trading the safety margin for reorientation time is what lets a 1 m
        drop reach a landable attitude at all.
        """
        return cls(**{"retraction_margin": 0.0, **overrides})

    @property
    def ramp_time(self) -> float:
        return (self.tail_length_max - self.tail_length_min) / self.retraction_speed

    def to_dict(self) -> dict:
        d = asdict(self)
        d["desired_quat"] = list(self.desired_quat)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> PhaseConfig:
        names = {f.name for f in fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ValueError(f"unknown phase keys: {sorted(unknown)}")
        data = dict(data)
        if "desired_quat" in data:
            data["desired_quat"] = tuple(data["desired_quat"])
        return cls(**data)


def touchdown_time(drop_height: float, touchdown_height: float, gravity: float) -> float:
    """Free-fall time from release until the body reaches ``touchdown_height``."""
    return math.sqrt(2.0 * max(0.0, drop_height - touchdown_height) / gravity)


def trigger_height(drop_height: float, touchdown_height: float, gravity: float, config: PhaseConfig) -> float:
    """Height ``h_s`` leaving ``ramp_time + margin`` of fall before touchdown.

    Short drops where that would leave less than ``min_reorient_time`` for
    swinging switch to the early schedule: the margin is dropped and the ramp
    ends at touchdown. Returns ``drop_height`` (retract at once) when even the
    ramp does not fit.
    """
    t_td = touchdown_time(drop_height, touchdown_height, gravity)
    t_s = t_td - config.ramp_time - config.retraction_margin
    if t_s < config.min_reorient_time:
        t_s = t_td - config.ramp_time
    if t_s <= 0:
        return drop_height
    return drop_height - 0.5 * gravity * t_s * t_s


@dataclass(frozen=True)
class PhaseState:
    phase: Phase = Phase.FLIGHT_REORIENT
    entry_time: float = 0.0
    retract_start_length: float | None = None
    early_touchdown: bool = False
    transitions: tuple = ()


class TrackingCommand(NamedTuple):
    tau: np.ndarray
    clamped: bool


@dataclass
class TrackingPolicy:
    """Time-varying affine policy around a planned trajectory.

    ``X`` are planning-model states (nj = 2), ``U`` controls held constant over
    each knot interval, ``K`` gains over the 16-dim planning tangent.
    """

    X: np.ndarray
    U: np.ndarray
    K: np.ndarray
    dt: float
    tau_min: float
    tau_max: float
    _quats: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.U = np.asarray(self.U, dtype=float)
        self.K = np.asarray(self.K, dtype=float)
        N = self.U.shape[0]
        if self.X.shape[0] != N + 1 or self.K.shape[0] != N:
            raise ValueError("need N+1 states, N controls and N gains")
        if not self.tau_min < self.tau_max:
            raise ValueError("tau_min must be below tau_max")
        self._quats = self.X[:, 3:7]

    @classmethod
    def from_solution(cls, solution, model) -> TrackingPolicy:
        lo, hi = model.torque_limits
        return cls(solution.X, solution.U, solution.K, solution.dt, lo, hi)

    @classmethod
    def feedforward(cls, solution, model) -> TrackingPolicy:
        lo, hi = model.torque_limits
        return cls(solution.X, solution.U, np.zeros_like(solution.K), solution.dt, lo, hi)

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def duration(self) -> float:
        return self.N * self.dt

    def reference(self, t: float):
        """Interpolated reference ``(x_ref, u_ref, K, clamped)`` at time ``t``."""
        clamped = not (0.0 <= t <= self.duration)
        t = min(max(t, 0.0), self.duration)
        s = t / self.dt
        k = min(int(math.floor(s)), self.N - 1)
        a = s - k
        x0, x1 = self.X[k], self.X[k + 1]
        xr = (1 - a) * x0 + a * x1
        q0 = x0[3:7]
        xr[3:7] = quat_box_plus(q0, a * quat_box_minus(x1[3:7], q0))
        knear = min(int(round(s)), self.N - 1)
        return xr, self.U[k], self.K[knear], clamped


def _planning_error(x: np.ndarray, xr: np.ndarray) -> np.ndarray:
    """Tangent error ``x - x_ref`` on the 16-dim planning layout.

    ``x`` may be a planning (17) or simulation (19) state; the tail length and
    its rate are dropped.
    """
    nj = (x.size - 13) // 2
    p, q, qt = x[0:3], x[3:7], x[7:9]
    v, w, qdt = x[7 + nj : 10 + nj], x[10 + nj : 13 + nj], x[13 + nj : 15 + nj]
    dx = np.empty(16)
    dx[0:3] = p - xr[0:3]
    dx[3:6] = quat_box_minus(q, xr[3:7])
    dx[6:8] = qt - xr[7:9]
    dx[8:11] = v - xr[9:12]
    dx[11:14] = w - xr[12:15]
    dx[14:16] = qdt - xr[15:17]
    return dx


def tracking_control(t: float, x, policy: TrackingPolicy) -> TrackingCommand:
    """Affine tracking law ``tau_ref + K (x - x_ref)``, saturated to the torque box."""
    if hasattr(x, "to_vector"):
        x = x.to_vector()
    x = np.asarray(x, dtype=float)
    xr, ur, K, clamped = policy.reference(t)
    tau = ur + K @ _planning_error(x, xr)
    return TrackingCommand(np.clip(tau, policy.tau_min, policy.tau_max), clamped)


def should_retract(t: float, x, config: PhaseConfig) -> bool:
    if hasattr(x, "to_vector"):
        x = x.to_vector()
    x = np.asarray(x, dtype=float)
    if attitude_error(np.asarray(config.desired_quat), x[3:7]) < config.attitude_tolerance:
        return True
    if config.trigger_height is not None and x[2] < config.trigger_height:
        return True
    return t >= config.flight_budget


def retraction_command(t_since: float, config: PhaseConfig, start_length: float | None = None) -> float:
    """Commanded tail length: a ramp from ``start_length`` down to the minimum."""
    start = config.tail_length_max if start_length is None else start_length
    start = min(max(start, config.tail_length_min), config.tail_length_max)
    return max(config.tail_length_min, start - config.retraction_speed * max(0.0, t_since))


def retraction_force(ell: float, ell_dot: float, ell_cmd: float, config: PhaseConfig) -> float:
    """Saturated PD force on the prismatic tail joint."""
    f = config.retraction_kp * (ell_cmd - ell) - config.retraction_kd * ell_dot
    lim = config.retraction_force_limit
    return min(max(f, -lim), lim)


def joint_hold_torque(q, qd, q_ref, config: PhaseConfig, tau_min: float, tau_max: float) -> np.ndarray:
    """PD hold of tail pitch/yaw at ``q_ref``, saturated to the torque box."""
    tau = config.hold_kp * (np.asarray(q_ref) - np.asarray(q)) - config.hold_kd * np.asarray(qd)
    return np.clip(tau, tau_min, tau_max)


def attitude_hold_torque(x, model, config: PhaseConfig, tau_min: float, tau_max: float) -> np.ndarray:
    """Tail pitch/yaw torques that keep the body at the desired attitude.

    Uses the flight momentum map: with the base momentum fixed, body rate
    responds to tail joint rates through ``-[M_bb^-1 M_bj]`` (rows of
    omega). The commanded joint rates steer the body rate towards
    ``-attitude_gain * log(q_d^-1 q)`` and a rate loop turns them into
    torques. Meant for the retraction phase, where shortening the tail would
    otherwise rotate the body.
    """
    from .model import mass_matrix

    if hasattr(x, "to_vector"):
        x = x.to_vector()
    x = np.asarray(x, dtype=float)
    nj = model.n_joints
    M = mass_matrix(model, x)
    S = -np.linalg.solve(M[:6, :6], M[:6, 6:])[3:6, :2]
    w = x[10 + nj : 13 + nj]
    qd = x[13 + nj : 15 + nj]
    phi = quat_box_minus(x[3:7], np.asarray(config.desired_quat))
    w_des = -config.attitude_gain * phi
    # damped least squares: the yaw column fades as the pitch nears 90 deg
    lam2 = (_SERVO_DAMPING * np.linalg.norm(S)) ** 2
    qd_des = qd + S.T @ np.linalg.solve(S @ S.T + lam2 * np.eye(3), w_des - w)
    # keep the pitch off its stops (and the gimbal singularity behind them)
    soft = model.params.tail_pitch_limit - _PITCH_GUARD
    pitch = x[7]
    if pitch > soft:
        qd_des[0] = min(qd_des[0], config.attitude_gain * (soft - pitch))
    elif pitch < -soft:
        qd_des[0] = max(qd_des[0], config.attitude_gain * (-soft - pitch))
    tau = config.attitude_rate_gain * (qd_des - qd) * _tail_inertia(model, x) / _tail_inertia_ref(model)
    return np.clip(tau, tau_min, tau_max)


_SERVO_DAMPING = 0.05
_PITCH_GUARD = math.radians(15.0)


def _tail_inertia(model, x) -> float:
    nj = model.n_joints
    ell = x[9] if nj == 3 else model.fixed_length
    return model.params.tail_mass * ell * ell


def _tail_inertia_ref(model) -> float:
    ell = model.params.tail_length_range[1]
    return max(model.params.tail_mass * ell * ell, 1e-12)


def stance_control(x, leg_lengths, leg_rates, config: PhaseConfig, hip_offsets=None, rest_length: float = 0.27):
    """Axial force (>= 0, pushing the body away from the foot) for each leg.

    Spring-damper on leg length plus a damper on the hip velocity along the
    leg axis caused by body rotation, which resists tipping.
    """
    L = np.asarray(leg_lengths, dtype=float)
    Ld = np.asarray(leg_rates, dtype=float)
    f = config.stance_stiffness * (rest_length - L) - config.stance_damping * Ld
    if hip_offsets is not None:
        if hasattr(x, "to_vector"):
            x = x.to_vector()
        x = np.asarray(x, dtype=float)
        nj = (x.size - 13) // 2
        w = x[10 + nj : 13 + nj]
        # downward (along -z body) hip speed due to rotation
        down = -np.cross(w, np.asarray(hip_offsets, dtype=float))[:, 2]
        f = f + config.stance_angular_damping * down
    return np.clip(f, 0.0, config.stance_max_force)


def step_phase(state: PhaseState, t: float, x, contacts, config: PhaseConfig, tail_length: float | None = None) -> PhaseState:
    """Advance the phase machine by one tick (transitions only move forward)."""
    any_contact = bool(np.any(np.asarray(contacts, dtype=bool)))
    if state.phase == Phase.STANCE:
        return state
    if any_contact:
        return replace(
            state,
            phase=Phase.STANCE,
            entry_time=t,
            early_touchdown=state.early_touchdown or state.phase == Phase.FLIGHT_REORIENT,
            transitions=state.transitions + ((t, Phase.STANCE),),
        )
    if state.phase == Phase.FLIGHT_REORIENT and should_retract(t, x, config):
        start = config.tail_length_max if tail_length is None else float(tail_length)
        return replace(
            state,
            phase=Phase.FLIGHT_RETRACT,
            entry_time=t,
            retract_start_length=start,
            transitions=state.transitions + ((t, Phase.FLIGHT_RETRACT),),
        )
    return state
