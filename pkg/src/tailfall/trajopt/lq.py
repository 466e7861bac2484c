"""Linear-quadratic test problem and its discrete Riccati solution.

The solver treats this exactly like the reorientation problem, so agreement
with :func:`riccati_controls` checks the backward/forward passes without any
derivative or manifold error in the way.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def double_integrator(dim: int, dt: float):
    """Exact zero-order-hold discretization of ``d^2 p / dt^2 = u``."""
    eye = np.eye(dim)
    zero = np.zeros((dim, dim))
    A = np.block([[eye, dt * eye], [zero, eye]])
    B = np.vstack([0.5 * dt * dt * eye, dt * eye])
    return A, B


@dataclass
class LQProblem:
    x0: np.ndarray
    N: int = 50
    dt: float = 0.05
    dim: int = 2
    Q: np.ndarray | None = None
    R: np.ndarray | None = None
    Qf: np.ndarray | None = None
    A: np.ndarray = field(init=False)
    B: np.ndarray = field(init=False)

    def __post_init__(self):
        self.x0 = np.asarray(self.x0, dtype=float)
        self.A, self.B = double_integrator(self.dim, self.dt)
        n = 2 * self.dim
        if self.x0.shape != (n,):
            raise ValueError(f"x0 must have {n} entries")
        self.Q = np.eye(n) if self.Q is None else np.asarray(self.Q, dtype=float)
        self.R = 0.1 * np.eye(self.dim) if self.R is None else np.asarray(self.R, dtype=float)
        self.Qf = 10.0 * np.eye(n) if self.Qf is None else np.asarray(self.Qf, dtype=float)

    @property
    def nu(self) -> int:
        return self.dim

    @property
    def ndx(self) -> int:
        return 2 * self.dim

    def step(self, x, u):
        return self.A @ x + self.B @ u

    def rollout(self, U):
        X = np.empty((self.N + 1, self.ndx))
        X[0] = self.x0
        for k in range(self.N):
            X[k + 1] = self.step(X[k], U[k])
        return X

    def linearize(self, X, U, rel_step=None):
        return np.broadcast_to(self.A, (self.N,) + self.A.shape), np.broadcast_to(self.B, (self.N,) + self.B.shape)

    def difference(self, y, x):
        return y - x

    def total_cost(self, X, U) -> float:
        run = 0.5 * np.einsum("ki,ij,kj->", X[:-1], self.Q, X[:-1]) + 0.5 * np.einsum("ki,ij,kj->", U, self.R, U)
        return float(run + 0.5 * X[-1] @ self.Qf @ X[-1])

    def cost_derivatives(self, X, U):
        N = self.N
        lx = X[:-1] @ self.Q
        lu = U @ self.R
        lxx = np.broadcast_to(self.Q, (N,) + self.Q.shape)
        luu = np.broadcast_to(self.R, (N,) + self.R.shape)
        lux = np.zeros((N, self.nu, self.ndx))
        return lx, lu, lxx, luu, lux, self.Qf @ X[-1], self.Qf

    def control_bounds(self):
        return None

    n_path_constraints = 0

    def path_constraints(self, X):
        return np.zeros((X.shape[0], 0))

    def path_constraint_jacobians(self, X):
        return np.zeros((X.shape[0], 0, self.ndx))


def riccati_controls(problem: LQProblem) -> np.ndarray:
    """Optimal open-loop controls from the backward Riccati recursion."""
    A, B, Q, R = problem.A, problem.B, problem.Q, problem.R
    P = problem.Qf
    gains = []
    for _ in range(problem.N):
        K = np.linalg.solve(R + B.T @ P @ B, B.T @ P @ A)
        P = Q + A.T @ P @ (A - B @ K)
        gains.append(K)
    gains.reverse()
    x = problem.x0.copy()
    U = np.empty((problem.N, problem.nu))
    for k, K in enumerate(gains):
        U[k] = -K @ x
        x = A @ x + B @ U[k]
    return U
