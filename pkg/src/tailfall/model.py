"""Tailed single-rigid-body models.

Two models share one parameter set:

* the planning model: floating base plus a 2-DoF (pitch, yaw) tail of fixed
  length ``tail_length_range[1]``;
* the simulation model: the same with a third, prismatic tail DoF (length).

The tail is a point mass at the end of a massless link hinged at
``tail_mount_offset`` (body frame). Its direction is obtained by yawing about
body z and then pitching about the yawed y axis, applied to the rest
direction ``-x``; positive pitch swings the tip downwards::

    d(pitch, yaw) = [-cos(pitch) cos(yaw), -cos(pitch) sin(yaw), -sin(pitch)]

Generalized velocities are ``[p_dot (inertial), omega (body), q_tail_dot]``,
so the selection matrix is ``[0 I]`` over the tail rows. The equations of
motion are ``M(q) u_dot + h(q, u) = S^T tau + J^T f_ext`` where ``h`` lumps the
Coriolis/centrifugal and gravity terms.

Forward dynamics is delegated to :mod:`tailfall.kernels`; the mass matrix and
inverse dynamics here are a separate, plain-numpy construction used both as
public API and as a cross-check of the kernels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import kernels
from .spatial import IDENTITY, hat, normalize, rotation_from_quat


class ModelError(ValueError):
    """Invalid robot parameters or state."""


def _vec(values, n: int, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.shape != (n,):
        raise ModelError(f"{name} must have {n} entries, got {arr.shape}")
    return arr


DEFAULT_FOOT_OFFSETS = (
    (0.18, 0.13, -0.27),
    (0.18, -0.13, -0.27),
    (-0.18, 0.13, -0.27),
    (-0.18, -0.13, -0.27),
)


@dataclass(frozen=True)
class RobotParams:
    """Inertial and geometric parameters of the tailed robot.

    Defaults are the tailed A1 numbers. The mount offset, torque limits and
    workspace half-angle are not published values; they are estimates kept
    configurable.
    """

    body_mass: float = 12.45
    body_inertia: tuple[float, float, float] = (0.12, 0.39, 0.45)
    tail_mass: float = 1.25
    tail_length_range: tuple[float, float] = (0.12, 0.49)
    tail_mount_offset: tuple[float, float, float] = (-0.15, 0.0, 0.05)
    tail_torque_limits: tuple[float, float] = (-6.0, 6.0)
    tail_workspace_half_angle: float = math.radians(110.0)
    tail_pitch_limit: float = math.radians(85.0)
    gravity: float = 9.81
    foot_offsets: tuple[tuple[float, float, float], ...] = DEFAULT_FOOT_OFFSETS
    leg_rest_length: float = 0.27
    body_half_extents: tuple[float, float, float] = (0.22, 0.10, 0.06)

    def __post_init__(self):
        for f in ("body_inertia", "tail_length_range", "tail_mount_offset", "tail_torque_limits", "body_half_extents"):
            object.__setattr__(self, f, tuple(float(v) for v in getattr(self, f)))
        object.__setattr__(self, "foot_offsets", tuple(tuple(float(c) for c in o) for o in self.foot_offsets))
        self.validate()

    def validate(self) -> None:
        if not self.body_mass > 0:
            raise ModelError("body_mass must be positive")
        # a zero tail mass is allowed as the degenerate single-rigid-body case
        if not self.tail_mass >= 0:
            raise ModelError("tail_mass must be non-negative")
        if len(self.body_inertia) != 3 or min(self.body_inertia) <= 0:
            raise ModelError("body_inertia must be three positive entries")
        lo, hi = self.tail_length_range
        if not 0 < lo < hi:
            raise ModelError("tail_length_range must satisfy 0 < min < max")
        tmin, tmax = self.tail_torque_limits
        if not (tmin <= 0 <= tmax and tmin < tmax):
            raise ModelError("tail_torque_limits must satisfy min <= 0 <= max with min < max")
        if not 0 < self.tail_workspace_half_angle <= math.pi:
            raise ModelError("tail_workspace_half_angle must lie in (0, pi]")
        # the point-mass gimbal is singular at pitch = +-90 deg
        if not 0 < self.tail_pitch_limit < math.pi / 2:
            raise ModelError("tail_pitch_limit must lie in (0, pi/2)")
        if not self.gravity >= 0:
            raise ModelError("gravity must be non-negative")
        if len(self.tail_mount_offset) != 3:
            raise ModelError("tail_mount_offset must have 3 entries")
        if any(len(o) != 3 for o in self.foot_offsets) or len(self.foot_offsets) == 0:
            raise ModelError("foot_offsets must be a non-empty list of 3-vectors")
        if not self.leg_rest_length > 0:
            raise ModelError("leg_rest_length must be positive")

    @classmethod
    def test_platform(cls, **overrides) -> RobotParams:
        """The cuboid flight-phase test platform carrying the same tail."""
        base = dict(body_mass=11.5, body_inertia=(0.05, 0.25, 0.22))
        base.update(overrides)
        return cls(**base)

    @property
    def total_mass(self) -> float:
        return self.body_mass + self.tail_mass

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, tuple):
                v = [list(e) if isinstance(e, tuple) else e for e in v]
            out[f.name] = v
        return out

    @classmethod
    def from_dict(cls, data: dict) -> RobotParams:
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ModelError(f"unknown robot parameter(s): {sorted(unknown)}")
        kwargs = {}
        for k, v in data.items():
            if isinstance(v, list):
                v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
            kwargs[k] = v
        return cls(**kwargs)


@dataclass(frozen=True)
class Model:
    """A tailed-body model; ``n_joints`` is 2 (planning) or 3 (simulation)."""

    params: RobotParams
    n_joints: int
    fixed_length: float
    kernel_params: np.ndarray = field(repr=False, compare=False)

    @property
    def nq(self) -> int:
        return 7 + self.n_joints

    @property
    def nv(self) -> int:
        return 6 + self.n_joints

    @property
    def nx(self) -> int:
        return self.nq + self.nv

    @property
    def ndx(self) -> int:
        return 2 * self.nv

    @property
    def total_mass(self) -> float:
        return self.params.total_mass

    @property
    def torque_limits(self) -> tuple[float, float]:
        return self.params.tail_torque_limits

    def selection_matrix(self) -> np.ndarray:
        return np.hstack([np.zeros((self.n_joints, 6)), np.eye(self.n_joints)])


def _kernel_params(params: RobotParams, fixed_length: float) -> np.ndarray:
    arr = np.array(
        [
            params.body_mass,
            *params.body_inertia,
            params.tail_mass,
            *params.tail_mount_offset,
            params.gravity,
            fixed_length,
        ],
        dtype=float,
    )
    arr.setflags(write=False)
    return arr


def build_planning_model(params: RobotParams) -> Model:
    """8-DoF model with the tail locked at its maximum length."""
    params.validate()
    ell = params.tail_length_range[1]
    return Model(params, 2, ell, _kernel_params(params, ell))


def build_sim_model(params: RobotParams) -> Model:
    """9-DoF model with the telescoping tail joint."""
    params.validate()
    ell = params.tail_length_range[1]
    return Model(params, 3, ell, _kernel_params(params, ell))


@dataclass
class SystemState:
    """Floating-base pose/twist plus tail joint positions and rates.

    ``quat`` is ``[x, y, z, w]`` (body to inertial); ``v`` is the body-CoM
    velocity in the inertial frame; ``omega`` is in the body frame. ``q_t`` is
    ``[pitch, yaw]`` or ``[pitch, yaw, length]``.
    """

    p: np.ndarray
    quat: np.ndarray
    q_t: np.ndarray
    v: np.ndarray
    omega: np.ndarray
    qd_t: np.ndarray

    def __post_init__(self):
        self.p = _vec(self.p, 3, "p")
        self.quat = normalize(_vec(self.quat, 4, "quat"))
        self.q_t = np.asarray(self.q_t, dtype=float).reshape(-1)
        self.v = _vec(self.v, 3, "v")
        self.omega = _vec(self.omega, 3, "omega")
        self.qd_t = np.asarray(self.qd_t, dtype=float).reshape(-1)
        if self.q_t.shape != self.qd_t.shape or self.q_t.size not in (2, 3):
            raise ModelError("q_t and qd_t must both have 2 or 3 entries")

    @property
    def n_joints(self) -> int:
        return self.q_t.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.p, self.quat, self.q_t, self.v, self.omega, self.qd_t])

    @classmethod
    def from_vector(cls, x, n_joints: int | None = None) -> SystemState:
        x = np.asarray(x, dtype=float)
        nj = (x.size - 13) // 2 if n_joints is None else n_joints
        if x.size != 13 + 2 * nj:
            raise ModelError(f"state vector of length {x.size} does not match {nj} tail joints")
        return cls(
            x[0:3],
            x[3:7],
            x[7 : 7 + nj],
            x[7 + nj : 10 + nj],
            x[10 + nj : 13 + nj],
            x[13 + nj : 13 + 2 * nj],
        )

    @classmethod
    def at_rest(cls, model: Model, p=(0.0, 0.0, 0.0), quat=IDENTITY, q_t=None) -> SystemState:
        nj = model.n_joints
        if q_t is None:
            q_t = [0.0, 0.0, model.params.tail_length_range[1]][:nj]
        return cls(np.asarray(p, float), np.asarray(quat, float), np.asarray(q_t, float), np.zeros(3), np.zeros(3), np.zeros(nj))

    def with_(self, **changes) -> SystemState:
        return replace(self, **changes)


def _as_vector(model: Model, x) -> np.ndarray:
    if isinstance(x, SystemState):
        x = x.to_vector()
    x = np.asarray(x, dtype=float)
    if x.shape != (model.nx,):
        raise ModelError(f"state has shape {x.shape}, model expects ({model.nx},)")
    return x


# ----------------------------------------------------------------------------
# tail kinematics


def tail_direction(pitch: float, yaw: float) -> np.ndarray:
    cp, sp, cy, sy = math.cos(pitch), math.sin(pitch), math.cos(yaw), math.sin(yaw)
    return np.array([-cp * cy, -cp * sy, -sp])


def _tail_direction_partials(pitch: float, yaw: float):
    cp, sp, cy, sy = math.cos(pitch), math.sin(pitch), math.cos(yaw), math.sin(yaw)
    d = np.array([-cp * cy, -cp * sy, -sp])
    d_p = np.array([sp * cy, sp * sy, -cp])
    d_y = np.array([cp * sy, -cp * cy, 0.0])
    d_pp = -d
    d_py = np.array([-sp * sy, sp * cy, 0.0])
    d_yy = np.array([cp * cy, cp * sy, 0.0])
    return d, d_p, d_y, d_pp, d_py, d_yy


def tail_tip_position(q_t, ell: float, mount=RobotParams.tail_mount_offset) -> np.ndarray:
    """Tail point-mass position in the body frame."""
    return np.asarray(mount, dtype=float) + ell * tail_direction(q_t[0], q_t[1])


def tail_angle_from_rest(q_t) -> float:
    """Angle between the tail direction and the rest direction ``-x``."""
    c = math.cos(q_t[0]) * math.cos(q_t[1])
    return math.acos(min(1.0, max(-1.0, c)))


def workspace_violation(q_t, half_angle: float = RobotParams.tail_workspace_half_angle) -> float:
    """Amount (rad) by which the tail leaves the cone around ``-x``; zero inside."""
    return max(0.0, tail_angle_from_rest(q_t) - half_angle)


def _tail_terms(model: Model, xv: np.ndarray):
    """Body-frame tail position, joint Jacobian, relative velocity and bias."""
    nj = model.n_joints
    qj = xv[7 : 7 + nj]
    qjd = xv[13 + nj : 13 + 2 * nj]
    ell = qj[2] if nj == 3 else model.fixed_length
    elld = qjd[2] if nj == 3 else 0.0
    d, d_p, d_y, d_pp, d_py, d_yy = _tail_direction_partials(qj[0], qj[1])
    r = np.asarray(model.params.tail_mount_offset) + ell * d
    J = np.column_stack([ell * d_p, ell * d_y, d][:nj])
    pd, yd = qjd[0], qjd[1]
    vrel = J @ qjd
    crel = ell * (d_pp * pd * pd + 2 * d_py * pd * yd + d_yy * yd * yd) + 2 * elld * (d_p * pd + d_y * yd)
    return r, J, vrel, crel


def _tail_jacobian_world(model: Model, xv: np.ndarray):
    R = rotation_from_quat(xv[3:7])
    r, J, vrel, crel = _tail_terms(model, xv)
    Jt = np.hstack([np.eye(3), -R @ hat(r), R @ J])
    return R, r, Jt, vrel, crel


def point_jacobian(model: Model, x, point_body) -> np.ndarray:
    """World-velocity Jacobian (3 x nv) of a point fixed in the body."""
    xv = _as_vector(model, x)
    R = rotation_from_quat(xv[3:7])
    return np.hstack([np.eye(3), -R @ hat(np.asarray(point_body, float)), np.zeros((3, model.n_joints))])


def tail_jacobian(model: Model, x) -> np.ndarray:
    """World-velocity Jacobian (3 x nv) of the tail point mass."""
    return _tail_jacobian_world(model, _as_vector(model, x))[2]


def body_point_world(model: Model, x, point_body) -> tuple[np.ndarray, np.ndarray]:
    """World position and velocity of a point fixed in the body frame."""
    xv = _as_vector(model, x)
    R = rotation_from_quat(xv[3:7])
    nj = model.n_joints
    pb = np.asarray(point_body, dtype=float)
    pos = xv[0:3] + R @ pb
    vel = xv[7 + nj : 10 + nj] + R @ np.cross(xv[10 + nj : 13 + nj], pb)
    return pos, vel


def tail_tip_world(model: Model, x) -> tuple[np.ndarray, np.ndarray]:
    """World position and velocity of the tail point mass."""
    xv = _as_vector(model, x)
    nj = model.n_joints
    R = rotation_from_quat(xv[3:7])
    r, _, vrel, _ = _tail_terms(model, xv)
    w = xv[10 + nj : 13 + nj]
    return xv[0:3] + R @ r, xv[7 + nj : 10 + nj] + R @ (np.cross(w, r) + vrel)


# ----------------------------------------------------------------------------
# dynamics


def mass_matrix(model: Model, x) -> np.ndarray:
    """Joint-space inertia matrix ``M(q)``, symmetric positive definite."""
    xv = _as_vector(model, x)
    p = model.params
    _, _, Jt, _, _ = _tail_jacobian_world(model, xv)
    M = np.zeros((model.nv, model.nv))
    M[0:3, 0:3] = p.body_mass * np.eye(3)
    M[3:6, 3:6] = np.diag(p.body_inertia)
    M += p.tail_mass * Jt.T @ Jt
    return M


def nonlinear_effects(model: Model, x) -> tuple[np.ndarray, np.ndarray]:
    """Coriolis/centrifugal vector ``b`` and gravity vector ``g`` (each length nv)."""
    xv = _as_vector(model, x)
    p = model.params
    nj = model.n_joints
    w = xv[10 + nj : 13 + nj]
    R, r, Jt, vrel, crel = _tail_jacobian_world(model, xv)
    bias_world = R @ (np.cross(w, np.cross(w, r)) + 2 * np.cross(w, vrel) + crel)
    b = p.tail_mass * Jt.T @ bias_world
    b[3:6] += np.cross(w, np.asarray(p.body_inertia) * w)
    ez = np.array([0.0, 0.0, p.gravity])
    g = p.tail_mass * Jt.T @ ez
    g[0:3] += p.body_mass * ez
    return b, g


def inverse_dynamics(model: Model, x, udot, gen_ext=None) -> np.ndarray:
    """Generalized force ``M udot + b + g - gen_ext``.

    For accelerations produced by :func:`forward_dynamics`, the base rows are
    zero and the tail rows reproduce the applied joint forces.
    """
    M = mass_matrix(model, x)
    b, g = nonlinear_effects(model, x)
    out = M @ np.asarray(udot, dtype=float) + b + g
    if gen_ext is not None:
        out = out - np.asarray(gen_ext, dtype=float)
    return out


def forward_dynamics(model: Model, x, tau, gen_ext=None) -> np.ndarray:
    """Generalized accelerations ``[p_ddot, omega_dot, q_tail_ddot]``.

    ``tau`` holds the tail joint forces (length ``n_joints``); ``gen_ext`` is
    an optional generalized external force (length ``nv``), e.g. from
    :func:`generalized_force`.
    """
    xv = _as_vector(model, x)
    tau = np.asarray(tau, dtype=float).reshape(model.n_joints)
    ext = None if gen_ext is None else np.ascontiguousarray(gen_ext, dtype=float)
    return kernels.forward_dynamics(model.kernel_params, model.n_joints, xv, np.ascontiguousarray(tau), ext)


def generalized_force(model: Model, x, body_points=(), body_forces=(), tail_force=None) -> np.ndarray:
    """Map world forces at body points (and optionally at the tail mass) to ``J^T f``."""
    xv = _as_vector(model, x)
    out = np.zeros(model.nv)
    R = rotation_from_quat(xv[3:7])
    for pb, f in zip(body_points, body_forces):
        f = np.asarray(f, dtype=float)
        out[0:3] += f
        out[3:6] += np.cross(pb, R.T @ f)
    if tail_force is not None:
        out += tail_jacobian(model, xv).T @ np.asarray(tail_force, dtype=float)
    return out


# ----------------------------------------------------------------------------
# momentum


def com_position(model: Model, x) -> np.ndarray:
    xv = _as_vector(model, x)
    p = model.params
    tip, _ = tail_tip_world(model, xv)
    return (p.body_mass * xv[0:3] + p.tail_mass * tip) / p.total_mass


def com_velocity(model: Model, x) -> np.ndarray:
    xv = _as_vector(model, x)
    p = model.params
    nj = model.n_joints
    _, tipv = tail_tip_world(model, xv)
    return (p.body_mass * xv[7 + nj : 10 + nj] + p.tail_mass * tipv) / p.total_mass


def angular_momentum_about_com(model: Model, x) -> np.ndarray:
    """Total angular momentum about the system CoM, inertial frame."""
    xv = _as_vector(model, x)
    p = model.params
    nj = model.n_joints
    R = rotation_from_quat(xv[3:7])
    c = com_position(model, xv)
    tip, tipv = tail_tip_world(model, xv)
    w = xv[10 + nj : 13 + nj]
    v = xv[7 + nj : 10 + nj]
    h = R @ (np.asarray(p.body_inertia) * w)
    h += p.body_mass * np.cross(xv[0:3] - c, v)
    h += p.tail_mass * np.cross(tip - c, tipv)
    return h
