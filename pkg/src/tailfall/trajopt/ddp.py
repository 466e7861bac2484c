"""Constrained DDP (Gauss-Newton / iLQR flavour) on a tangent-space state.

Control bounds are handled with a relaxed log-barrier (quadratic below the
relaxation margin); state path constraints ``g(x) <= 0`` with an augmented
Lagrangian whose multipliers and penalty are updated between inner solves.

The solver only needs a problem object that provides ``N, nu, ndx, x0``,
``step, rollout, linearize, difference, total_cost, cost_derivatives,
control_bounds, n_path_constraints, path_constraints,
path_constraint_jacobians``. :class:`~tailfall.trajopt.problem.OCProblem`
and :class:`~tailfall.trajopt.lq.LQProblem` both do.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

log = logging.getLogger(__name__)


class DivergenceError(FloatingPointError):
    """A rollout produced a non-finite state."""


@dataclass
class SolverSettings:
    max_iterations: int = 400
    cost_tolerance: float = 1e-12
    stationarity_tolerance: float = 1e-3
    constraint_tolerance: float = 1e-4
    reg_init: float = 1e-6
    reg_growth: float = 2.0
    reg_shrink: float = 0.5
    reg_min: float = 1e-9
    reg_max: float = 1e10
    line_search_factor: float = 0.5
    min_step: float = 1e-4
    armijo: float = 1e-4
    al_penalty_init: float = 1.0
    al_penalty_growth: float = 10.0
    barrier_weight: float = 1e-2
    # None -> 0.1 * (upper - lower)
    barrier_relaxation: float | None = None
    barrier_relaxation_shrink: float = 0.1
    max_outer: int = 8
    fd_step: float = 1e-6

    def __post_init__(self):
        positive = (
            "max_iterations cost_tolerance stationarity_tolerance constraint_tolerance reg_init reg_min "
            "reg_max min_step armijo al_penalty_init barrier_weight max_outer fd_step"
        ).split()
        for name in positive:
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("reg_growth", "al_penalty_growth"):
            if not getattr(self, name) > 1:
                raise ValueError(f"{name} must exceed 1")
        for name in ("reg_shrink", "line_search_factor", "barrier_relaxation_shrink"):
            if not 0 < getattr(self, name) < 1:
                raise ValueError(f"{name} must lie in (0, 1)")
        if self.barrier_relaxation is not None and not self.barrier_relaxation > 0:
            raise ValueError("barrier_relaxation must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class Solution:
    """Nominal trajectory, feedback gains and convergence report."""

    X: np.ndarray
    U: np.ndarray
    K: np.ndarray
    k: np.ndarray
    dt: float
    objective: float
    cost_history: list[float] = field(default_factory=list)
    outer_history: list[int] = field(default_factory=list)
    converged: bool = False
    iterations: int = 0
    stationarity: float = math.inf
    torque_violation: float = 0.0
    path_violation: float = 0.0
    message: str = ""

    @property
    def N(self) -> int:
        return self.U.shape[0]

    @property
    def constraint_violation(self) -> float:
        return max(self.torque_violation, self.path_violation)


def _barrier(z, mu, delta):
    inside = z > delta
    zs = np.where(inside, z, delta)
    t = (z - 2.0 * delta) / delta
    val = np.where(inside, -mu * np.log(zs), mu * (0.5 * t * t - 0.5 - np.log(delta)))
    d1 = np.where(inside, -mu / zs, mu * t / delta)
    d2 = np.where(inside, mu / (zs * zs), mu / (delta * delta))
    return val, d1, d2


class _Augmentation:
    """Barrier and augmented-Lagrangian terms added to the problem cost."""

    def __init__(self, problem, settings: SolverSettings):
        self.problem = problem
        self.bounds = problem.control_bounds()
        self.mu = settings.barrier_weight
        if self.bounds is not None:
            lo, hi = (np.asarray(b, dtype=float) for b in self.bounds)
            self.bounds = (lo, hi)
            rel = settings.barrier_relaxation
            self.delta = 0.1 * (hi - lo) if rel is None else np.full_like(lo, rel)
        self.m = problem.n_path_constraints
        self.lam = np.zeros((problem.N + 1, self.m))
        self.rho = settings.al_penalty_init

    def barrier_terms(self, U):
        if self.bounds is None:
            z = np.zeros_like(U)
            return 0.0, z, z
        lo, hi = self.bounds
        vh, dh, hh = _barrier(hi - U, self.mu, self.delta)
        vl, dl, hl = _barrier(U - lo, self.mu, self.delta)
        return float(np.sum(vh + vl)), dl - dh, hh + hl

    def al_terms(self, X):
        if self.m == 0:
            return 0.0, None, None
        g = self.problem.path_constraints(X)
        c = np.maximum(0.0, self.lam + self.rho * g)
        val = float(np.sum(c[1:] ** 2 - self.lam[1:] ** 2) / (2.0 * self.rho))
        return val, g, c

    def cost(self, X, U) -> float:
        return self.problem.total_cost(X, U) + self.barrier_terms(U)[0] + self.al_terms(X)[0]

    def derivatives(self, X, U):
        lx, lu, lxx, luu, lux, Vx, Vxx = self.problem.cost_derivatives(X, U)
        lu = lu.copy()
        luu = luu.copy()
        _, d1, d2 = self.barrier_terms(U)
        lu += d1
        idx = np.arange(U.shape[1])
        luu[:, idx, idx] += d2
        if self.m:
            _, g, c = self.al_terms(X)
            G = self.problem.path_constraint_jacobians(X)
            gx = np.einsum("km,kmi->ki", c, G)
            act = (c > 0).astype(float) * self.rho
            gxx = np.einsum("km,kmi,kmj->kij", act, G, G)
            N = U.shape[0]
            lx = lx + np.vstack([np.zeros((1, lx.shape[1])), gx[1:N]])
            lxx = lxx + np.concatenate([np.zeros((1,) + lxx.shape[1:]), gxx[1:N]])
            Vx = Vx + gx[N]
            Vxx = Vxx + gxx[N]
        return lx, lu, lxx, luu, lux, Vx, Vxx

    def violations(self, X, U):
        tv = 0.0
        if self.bounds is not None:
            lo, hi = self.bounds
            tv = float(max(0.0, np.max(U - hi), np.max(lo - U)))
        pv = 0.0
        if self.m:
            pv = float(max(0.0, np.max(self.problem.path_constraints(X)[1:])))
        return tv, pv

    def update(self, X, U, settings: SolverSettings):
        tv, pv = self.violations(X, U)
        if self.m:
            g = self.problem.path_constraints(X)
            self.lam = np.maximum(0.0, self.lam + self.rho * g)
            if pv > settings.constraint_tolerance:
                self.rho *= settings.al_penalty_growth
        if self.bounds is not None and tv > settings.constraint_tolerance:
            self.delta = self.delta * settings.barrier_relaxation_shrink


def _backward(A, B, lx, lu, lxx, luu, lux, Vx, Vxx, reg):
    N, nu = lu.shape
    ndx = lx.shape[1]
    K = np.empty((N, nu, ndx))
    kff = np.empty((N, nu))
    dV1 = 0.0
    dV2 = 0.0
    eye = np.eye(nu)
    for i in range(N - 1, -1, -1):
        At, Bt = A[i].T, B[i].T
        Qx = lx[i] + At @ Vx
        Qu = lu[i] + Bt @ Vx
        VA = Vxx @ A[i]
        VB = Vxx @ B[i]
        Qxx = lxx[i] + At @ VA
        Quu = luu[i] + Bt @ VB
        Qux = lux[i] + Bt @ VA
        Quu_r = Quu + reg * eye
        try:
            L = np.linalg.cholesky(Quu_r)
        except np.linalg.LinAlgError:
            return None
        rhs = np.column_stack([Qu, Qux])
        sol = -np.linalg.solve(L.T, np.linalg.solve(L, rhs))
        kk = sol[:, 0]
        KK = sol[:, 1:]
        kff[i] = kk
        K[i] = KK
        dV1 += kk @ Qu
        dV2 += 0.5 * kk @ Quu @ kk
        QuuK = Quu @ KK
        Vx = Qx + KK.T @ (Quu @ kk) + KK.T @ Qu + Qux.T @ kk
        Vxx = Qxx + KK.T @ QuuK + KK.T @ Qux + Qux.T @ KK
        Vxx = 0.5 * (Vxx + Vxx.T)
    return K, kff, dV1, dV2


def _adjoint_gradient(A, B, lx, lu, Vx):
    """Exact gradient of the (augmented) cost with respect to each control."""
    N = lu.shape[0]
    grad = np.empty_like(lu)
    lam = Vx
    for i in range(N - 1, -1, -1):
        grad[i] = lu[i] + B[i].T @ lam
        lam = lx[i] + A[i].T @ lam
    return grad


def _forward(problem, X, U, K, kff, alpha):
    N = U.shape[0]
    Xn = np.empty_like(X)
    Un = np.empty_like(U)
    Xn[0] = X[0]
    for i in range(N):
        dx = problem.difference(Xn[i], X[i])
        Un[i] = U[i] + alpha * kff[i] + K[i] @ dx
        Xn[i + 1] = problem.step(Xn[i], Un[i])
        if not np.all(np.isfinite(Xn[i + 1])):
            return None, None
    return Xn, Un


def _maybe_break_symmetry(problem, U):
    # the attitude error has a critical point at a half-turn; nudge the first knot
    from .problem import OCProblem, attitude_error_derivatives

    if not isinstance(problem, OCProblem):
        return U
    e, _, _ = attitude_error_derivatives(problem._Rd, problem.x0[3:7])
    if e > 2.0 - 1e-9:
        warnings.warn("initial orientation is a half-turn from the goal; perturbing the initial guess", stacklevel=3)
        U = U.copy()
        U[0] += 1e-3
    return U


def solve(problem, settings: SolverSettings | None = None, initial_controls=None) -> Solution:
    """Run constrained DDP from ``initial_controls`` (zeros by default)."""
    s = settings or SolverSettings()
    N, nu = problem.N, problem.nu
    if initial_controls is None:
        U = np.zeros((N, nu))
    else:
        U = np.array(initial_controls, dtype=float).reshape(N, nu)
    U = _maybe_break_symmetry(problem, U)

    aug = _Augmentation(problem, s)
    X = problem.rollout(U)
    if not np.all(np.isfinite(X)):
        bad = int(np.argmax(~np.all(np.isfinite(X), axis=1)))
        raise DivergenceError(f"initial rollout is non-finite from knot {bad} (iteration 0)")
    J = aug.cost(X, U)
    history = [J]
    outer_hist = [0]
    reg = s.reg_init
    it = 0
    stat = math.inf
    K = np.zeros((N, nu, problem.ndx))
    kff = np.zeros((N, nu))
    converged = False
    message = "max iterations reached"

    for outer in range(s.max_outer):
        while it < s.max_iterations:
            A, B = problem.linearize(X, U, s.fd_step)
            lx, lu, lxx, luu, lux, Vx, Vxx = aug.derivatives(X, U)
            grad = _adjoint_gradient(A, B, lx, lu, Vx)
            stat = float(np.max(np.abs(grad)))
            bw = None
            while bw is None:
                bw = _backward(A, B, lx, lu, lxx, luu, lux, Vx, Vxx, reg)
                if bw is None:
                    reg *= s.reg_growth
                    if reg > s.reg_max:
                        break
            if bw is None:
                message = "regularization limit reached in backward pass"
                break
            K, kff, dV1, dV2 = bw
            if stat <= s.stationarity_tolerance and -dV1 < s.cost_tolerance * max(1.0, abs(J)):
                break
            accepted = False
            alpha = 1.0
            while alpha >= s.min_step:
                Xn, Un = _forward(problem, X, U, K, kff, alpha)
                if Xn is not None:
                    Jn = aug.cost(Xn, Un)
                    expected = -(alpha * dV1 + alpha * alpha * dV2)
                    if Jn < J and (J - Jn) >= s.armijo * expected:
                        accepted = True
                        break
                alpha *= s.line_search_factor
            it += 1
            if accepted:
                improvement = J - Jn
                X, U, J = Xn, Un, Jn
                history.append(J)
                outer_hist.append(outer)
                reg = max(s.reg_min, reg * s.reg_shrink)
                log.debug("iter %d cost %.9g alpha %.3g reg %.2e stat %.2e", it, J, alpha, reg, stat)
                if improvement < s.cost_tolerance * max(1.0, abs(J)) and stat <= s.stationarity_tolerance:
                    break
            else:
                reg *= s.reg_growth
                if reg > s.reg_max:
                    message = "line search failed at regularization limit"
                    break
        tv, pv = aug.violations(X, U)
        feasible = tv <= s.constraint_tolerance and pv <= s.constraint_tolerance
        if feasible and stat <= s.stationarity_tolerance:
            converged = True
            message = "converged"
            break
        if it >= s.max_iterations or reg > s.reg_max:
            break
        if feasible:
            # stationarity stalled without a constraint to fix; tighten nothing and stop
            if message == "max iterations reached":
                message = "stalled before reaching stationarity tolerance"
            break
        aug.update(X, U, s)
        J = aug.cost(X, U)
        history.append(J)
        outer_hist.append(outer + 1)
        reg = s.reg_init

    # final gains and stationarity at the returned trajectory
    A, B = problem.linearize(X, U, s.fd_step)
    lx, lu, lxx, luu, lux, Vx, Vxx = aug.derivatives(X, U)
    stat = float(np.max(np.abs(_adjoint_gradient(A, B, lx, lu, Vx))))
    bw = _backward(A, B, lx, lu, lxx, luu, lux, Vx, Vxx, max(reg, s.reg_min))
    if bw is not None:
        K, kff = bw[0], bw[1]
    tv, pv = aug.violations(X, U)
    return Solution(
        X=X,
        U=U,
        K=K,
        k=kff,
        dt=getattr(problem, "dt", 1.0),
        objective=problem.total_cost(X, U),
        cost_history=history,
        outer_history=outer_hist,
        converged=converged,
        iterations=it,
        stationarity=stat,
        torque_violation=tv,
        path_violation=pv,
        message=message,
    )
