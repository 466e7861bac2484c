"""Quaternion and SO(3) helpers.

Quaternions are stored as ``[x, y, z, w]`` everywhere in this package.
Angular velocities passed to :func:`quat_integrate` are expressed in the
body frame and increments are composed on the right (body side):
``q_next = q * exp(omega * dt)``.

Euler angles follow the intrinsic Z-Y-X (yaw, pitch, roll) convention,
``R = Rz(yaw) @ Ry(pitch) @ Rx(roll)``.
"""

from __future__ import annotations

import math

import numpy as np

IDENTITY = np.array([0.0, 0.0, 0.0, 1.0])

_UNIT_TOL = 1e-6
_GIMBAL_MARGIN = 1e-6


class GimbalLockError(ValueError):
    """Raised when a yaw-pitch-roll decomposition is requested too close to pitch = +-pi/2."""


def normalize(q) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n < 1e-12:
        raise ValueError("cannot normalize a zero quaternion")
    return q / n


def _check_unit(q: np.ndarray) -> None:
    if abs(np.linalg.norm(q) - 1.0) > _UNIT_TOL:
        raise ValueError(f"quaternion is not unit norm (|q| = {np.linalg.norm(q):.9f})")


def quat_mul(a, b) -> np.ndarray:
    """Hamilton product ``a * b`` of two ``[x, y, z, w]`` quaternions."""
    ax, ay, az, aw = a
    bx, by, bz, bw = b
    return np.array(
        [
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
            aw * bw - ax * bx - ay * by - az * bz,
        ]
    )


def quat_conj(q) -> np.ndarray:
    return np.array([-q[0], -q[1], -q[2], q[3]])


def hat(v) -> np.ndarray:
    """Skew-symmetric matrix such that ``hat(a) @ b == cross(a, b)``."""
    return np.array([[0.0, -v[2], v[1]], [v[2], 0.0, -v[0]], [-v[1], v[0], 0.0]])


def vee(m) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def rotation_from_quat(q) -> np.ndarray:
    """Rotation matrix (body to inertial) of a unit quaternion ``[x, y, z, w]``."""
    q = np.asarray(q, dtype=float)
    _check_unit(q)
    x, y, z, w = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)],
            [2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)],
            [2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_rotation(R) -> np.ndarray:
    R = np.asarray(R, dtype=float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = [(R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s, 0.25 * s]
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = [0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s, (R[2, 1] - R[1, 2]) / s]
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = [(R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s, (R[0, 2] - R[2, 0]) / s]
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = [(R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s, (R[1, 0] - R[0, 1]) / s]
    return normalize(q)


def quat_exp(rotvec) -> np.ndarray:
    """Unit quaternion of the rotation vector ``rotvec`` (axis * angle)."""
    rotvec = np.asarray(rotvec, dtype=float)
    th = math.sqrt(rotvec @ rotvec)
    half = 0.5 * th
    if th < 1e-8:
        # sin(h)/th ~ 1/2 - th^2/48
        k = 0.5 - th * th / 48.0
    else:
        k = math.sin(half) / th
    return np.array([k * rotvec[0], k * rotvec[1], k * rotvec[2], math.cos(half)])


def quat_log(q) -> np.ndarray:
    """Rotation vector of ``q``, taking the short way round (angle in [0, pi])."""
    q = np.asarray(q, dtype=float)
    if q[3] < 0:
        q = -q
    s = math.sqrt(q[0] ** 2 + q[1] ** 2 + q[2] ** 2)
    if s < 1e-8:
        return 2.0 * q[:3] / q[3]
    ang = 2.0 * math.atan2(s, q[3])
    return q[:3] * (ang / s)


def quat_box_minus(q, q_ref) -> np.ndarray:
    """Body-side rotation increment ``d`` with ``q = q_ref * exp(d)``."""
    return quat_log(quat_mul(quat_conj(q_ref), q))


def quat_box_plus(q, d) -> np.ndarray:
    return normalize(quat_mul(q, quat_exp(d)))


def quat_distance(a, b) -> float:
    """Euclidean distance between quaternions, insensitive to the double cover."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    return float(min(np.linalg.norm(a - b), np.linalg.norm(a + b)))


def quat_integrate(q, omega_body, dt: float) -> np.ndarray:
    """Advance ``q`` by a constant body-frame angular velocity over ``dt``."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    return quat_box_plus(np.asarray(q, dtype=float), np.asarray(omega_body, dtype=float) * dt)


def attitude_error(q_d, q) -> float:
    """``0.5 * tr(I - R(q_d)^T R(q))``, in [0, 2]; zero iff the rotations agree."""
    Rd = rotation_from_quat(q_d)
    R = rotation_from_quat(q)
    return 0.5 * (3.0 - float(np.sum(Rd * R)))


def right_jacobian_inv(phi) -> np.ndarray:
    """Inverse right Jacobian of SO(3): maps body angular velocity to ``d/dt phi``."""
    phi = np.asarray(phi, dtype=float)
    th2 = phi @ phi
    P = hat(phi)
    if th2 < 1e-10:
        c = 1.0 / 12.0 + th2 / 720.0
    else:
        th = math.sqrt(th2)
        c = 1.0 / th2 - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
    return np.eye(3) + 0.5 * P + c * (P @ P)


def quat_from_euler(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Quaternion of intrinsic Z-Y-X angles (radians)."""
    cy, sy = math.cos(0.5 * yaw), math.sin(0.5 * yaw)
    cp, sp = math.cos(0.5 * pitch), math.sin(0.5 * pitch)
    cr, sr = math.cos(0.5 * roll), math.sin(0.5 * roll)
    return np.array(
        [
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
            cr * cp * cy + sr * sp * sy,
        ]
    )


def euler_from_quat(q, *, strict: bool = True) -> np.ndarray:
    """Intrinsic Z-Y-X angles ``[yaw, pitch, roll]`` of ``q``.

    With ``strict`` (the default) a :class:`GimbalLockError` is raised when
    ``|pitch| >= pi/2 - 1e-6``; reporting code passes ``strict=False`` to get
    a best-effort answer instead.
    """
    R = rotation_from_quat(q)
    sp = -R[2, 0]
    sp = min(1.0, max(-1.0, sp))
    pitch = math.asin(sp)
    if strict and abs(pitch) >= 0.5 * math.pi - _GIMBAL_MARGIN:
        raise GimbalLockError(f"pitch {pitch:.9f} rad is too close to +-pi/2")
    yaw = math.atan2(R[1, 0], R[0, 0])
    roll = math.atan2(R[2, 1], R[2, 2])
    return np.array([yaw, pitch, roll])
