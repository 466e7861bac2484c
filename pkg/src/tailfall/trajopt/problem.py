"""Reorientation optimal-control problem on the planning model."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels
from ..model import Model, SystemState
from ..spatial import IDENTITY, normalize, rotation_from_quat

DEFAULT_Q_UF = (0.0, 0.0, 0.0, 1e-3, 1e-3, 1e-3, 1e-4, 1e-4)
DEFAULT_R_TAU = (1e-3, 1e-3)


def _rot_batch(q: np.ndarray) -> np.ndarray:
    x, y, z, w = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            np.stack([1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w)], -1),
            np.stack([2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w)], -1),
            np.stack([2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y)], -1),
        ],
        -2,
    )


def attitude_error_derivatives(Rd: np.ndarray, quats: np.ndarray):
    """Value, body-side gradient and PSD-projected Hessian of the attitude error.

    ``quats`` has shape ``(..., 4)``. The Hessian of ``0.5 tr(I - E exp(d))``
    is ``0.5 (tr(E) I - sym(E))``, which turns indefinite far from the goal;
    negative eigenvalues are clipped to zero.
    """
    E = np.einsum("ji,...jk->...ik", Rd, _rot_batch(quats))
    tr = np.trace(E, axis1=-2, axis2=-1)
    val = 0.5 * (3.0 - tr)
    skew = E - np.swapaxes(E, -1, -2)
    grad = 0.5 * np.stack([skew[..., 2, 1], skew[..., 0, 2], skew[..., 1, 0]], -1)
    sym = 0.5 * (E + np.swapaxes(E, -1, -2))
    H = 0.5 * (tr[..., None, None] * np.eye(3) - sym)
    evals, evecs = np.linalg.eigh(H)
    H = np.einsum("...ij,...j,...kj->...ik", evecs, np.clip(evals, 0.0, None), evecs)
    return val, grad, H


@dataclass
class OCProblem:
    """Discretized reorientation problem.

    Running cost ``e(q_d, q) + 0.5 u_f^T Q_uf u_f + 0.5 tau^T R_tau tau`` and
    terminal cost ``w e(q_d, q)``; dynamics are one RK4 step of the planning
    model per knot. The torque box and the tail workspace cone are handed to
    the solver as constraints, together with the tail pitch range that keeps
    the gimbal away from its singularity.
    """

    model: Model
    x0: np.ndarray
    N: int = 200
    dt: float = 0.002
    q_d: np.ndarray = field(default_factory=lambda: IDENTITY.copy())
    w: float = 500.0
    Q_uf: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_Q_UF))
    R_tau: np.ndarray = field(default_factory=lambda: np.array(DEFAULT_R_TAU))
    torque_box: bool = True
    workspace_cone: bool = True

    def __post_init__(self):
        if isinstance(self.x0, SystemState):
            self.x0 = self.x0.to_vector()
        self.x0 = np.ascontiguousarray(self.x0, dtype=float)
        if self.x0.shape != (self.model.nx,):
            raise ValueError(f"x0 has shape {self.x0.shape}, expected ({self.model.nx},)")
        if self.N < 1 or not self.dt > 0:
            raise ValueError("need N >= 1 and dt > 0")
        self.q_d = normalize(self.q_d)
        self.Q_uf = np.asarray(self.Q_uf, dtype=float)
        self.R_tau = np.asarray(self.R_tau, dtype=float)
        if self.Q_uf.shape != (self.model.nv,) or self.R_tau.shape != (self.model.n_joints,):
            raise ValueError("Q_uf must have nv entries and R_tau n_joints entries")
        if np.any(self.Q_uf < 0) or np.any(self.R_tau < 0):
            raise ValueError("weights must be non-negative")
        if np.any(self.Q_uf[:3] != 0):
            raise ValueError("Q_uf entries for the CoM velocity must be zero")
        self._Rd = rotation_from_quat(self.q_d)

    # -- sizes -----------------------------------------------------------
    @property
    def nu(self) -> int:
        return self.model.n_joints

    @property
    def ndx(self) -> int:
        return self.model.ndx

    @property
    def horizon(self) -> float:
        return self.N * self.dt

    # -- dynamics --------------------------------------------------------
    def step(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        return kernels.rk4_step(self.model.kernel_params, self.model.n_joints, x, u, self.dt)

    def rollout(self, U: np.ndarray) -> np.ndarray:
        return kernels.rollout(self.model.kernel_params, self.model.n_joints, self.x0, np.ascontiguousarray(U), self.dt)

    def linearize(self, X: np.ndarray, U: np.ndarray, rel_step: float = 1e-6):
        return kernels.linearize(
            self.model.kernel_params, self.model.n_joints, np.ascontiguousarray(X), np.ascontiguousarray(U), self.dt, rel_step
        )

    def difference(self, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        return kernels.difference(self.model.n_joints, y, x)

    # -- costs -----------------------------------------------------------
    def _velocities(self, X):
        nj = self.model.n_joints
        return X[..., 7 + nj :]

    def stage_costs(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Running cost at each knot ``0..N-1``."""
        e, _, _ = attitude_error_derivatives(self._Rd, X[: self.N, 3:7])
        uf = self._velocities(X[: self.N])
        return e + 0.5 * np.einsum("ki,i,ki->k", uf, self.Q_uf, uf) + 0.5 * np.einsum("ki,i,ki->k", U, self.R_tau, U)

    def terminal_cost_value(self, xN: np.ndarray) -> float:
        e, _, _ = attitude_error_derivatives(self._Rd, xN[3:7])
        return float(self.w * e)

    def total_cost(self, X: np.ndarray, U: np.ndarray) -> float:
        return float(np.sum(self.stage_costs(X, U)) + self.terminal_cost_value(X[self.N]))

    def cost_derivatives(self, X: np.ndarray, U: np.ndarray):
        """Gradients and Hessians in tangent coordinates.

        Returns ``lx (N, ndx), lu (N, nu), lxx (N, ndx, ndx), luu (N, nu, nu),
        lux (N, nu, ndx), Vx (ndx,), Vxx (ndx, ndx)``.
        """
        N, nv, ndx, nu = self.N, self.model.nv, self.ndx, self.nu
        _, grad, H = attitude_error_derivatives(self._Rd, X[:, 3:7])
        lx = np.zeros((N, ndx))
        lxx = np.zeros((N, ndx, ndx))
        lx[:, 3:6] = grad[:N]
        lxx[:, 3:6, 3:6] = H[:N]
        uf = self._velocities(X[:N])
        lx[:, nv:] = uf * self.Q_uf
        lxx[:, np.arange(nv, ndx), np.arange(nv, ndx)] = self.Q_uf
        lu = U * self.R_tau
        luu = np.zeros((N, nu, nu)) + np.diag(self.R_tau)
        lux = np.zeros((N, nu, ndx))
        Vx = np.zeros(ndx)
        Vxx = np.zeros((ndx, ndx))
        Vx[3:6] = self.w * grad[N]
        Vxx[3:6, 3:6] = self.w * H[N]
        return lx, lu, lxx, luu, lux, Vx, Vxx

    # -- constraints -----------------------------------------------------
    def control_bounds(self):
        if not self.torque_box:
            return None
        lo, hi = self.model.torque_limits
        return np.full(self.nu, lo), np.full(self.nu, hi)

    @property
    def n_path_constraints(self) -> int:
        return 3 if self.workspace_cone else 0

    def path_constraints(self, X: np.ndarray) -> np.ndarray:
        """``g(x) <= 0`` at every knot.

        Columns: ``cos(half_angle) - cos(pitch) cos(yaw)`` (workspace cone),
        then ``pitch - limit`` and ``-pitch - limit``.
        """
        if not self.workspace_cone:
            return np.zeros((X.shape[0], 0))
        c = math.cos(self.model.params.tail_workspace_half_angle)
        lim = self.model.params.tail_pitch_limit
        pitch, yaw = X[:, 7], X[:, 8]
        return np.column_stack([c - np.cos(pitch) * np.cos(yaw), pitch - lim, -pitch - lim])

    def path_constraint_jacobians(self, X: np.ndarray) -> np.ndarray:
        G = np.zeros((X.shape[0], self.n_path_constraints, self.ndx))
        if self.workspace_cone:
            G[:, 0, 6] = np.sin(X[:, 7]) * np.cos(X[:, 8])
            G[:, 0, 7] = np.cos(X[:, 7]) * np.sin(X[:, 8])
            G[:, 1, 6] = 1.0
            G[:, 2, 6] = -1.0
        return G


def discretize(model: Model, x, tau, dt: float) -> np.ndarray:
    """One RK4 step of the flight dynamics (quaternion advanced on the sphere)."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    if isinstance(x, SystemState):
        x = x.to_vector()
    return kernels.rk4_step(
        model.kernel_params, model.n_joints, np.ascontiguousarray(x, dtype=float), np.ascontiguousarray(tau, dtype=float), dt
    )


def dynamics_derivatives(model: Model, x, tau, dt: float, rel_step: float = 1e-6):
    """Tangent-space Jacobians ``(A, B)`` of :func:`discretize` at ``(x, tau)``."""
    if isinstance(x, SystemState):
        x = x.to_vector()
    x = np.ascontiguousarray(x, dtype=float)
    u = np.ascontiguousarray(tau, dtype=float).reshape(1, -1)
    xn = discretize(model, x, u[0], dt)
    A, B = kernels.linearize(model.kernel_params, model.n_joints, np.vstack([x, xn]), u, dt, rel_step)
    return A[0], B[0]


def stage_cost(x, tau, problem: OCProblem) -> float:
    if isinstance(x, SystemState):
        x = x.to_vector()
    x = np.asarray(x, dtype=float)
    return float(problem.stage_costs(x[None, :], np.asarray(tau, dtype=float)[None, :])[0])


def terminal_cost(x, problem: OCProblem) -> float:
    if isinstance(x, SystemState):
        x = x.to_vector()
    return problem.terminal_cost_value(np.asarray(x, dtype=float))
