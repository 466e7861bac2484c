"""Drop-test simulator for the telescoping-tail model.

Physics and control both run at the scenario timestep (1 kHz by default).
The body and tail follow the 9-DoF model integrated with RK4 on the
quaternion manifold; ground contact is a penalty model with a viscous
tangential force capped by Coulomb friction.

Legs are massless telescoping struts hanging along body ``-z`` from the hips
(``foot_offset + [0, 0, rest_length]``). Each leg length is an extra state.
With the foot on the ground, the leg rate is fixed by force balance at the
massless foot: the ground force along the leg axis equals the leg force,
a monotone scalar equation solved by bisection. The full ground force at the
foot is passed to the body (legs are rigid laterally).

Body-box corners and the tail mass are also contact points; any ground force
on them counts as a non-foot strike when scoring.
"""

from __future__ import annotations

import concurrent.futures as cf
import dataclasses
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .control import (
    Phase,
    PhaseConfig,
    PhaseState,
    TrackingPolicy,
    attitude_hold_torque,
    joint_hold_torque,
    retraction_command,
    retraction_force,
    step_phase,
    tracking_control,
    trigger_height,
)
from .model import Model, RobotParams, angular_momentum_about_com, build_planning_model, build_sim_model
from .spatial import attitude_error, euler_from_quat, quat_from_euler, rotation_from_quat
from .trajopt import OCProblem, Solution, SolverSettings, solve

log = logging.getLogger(__name__)

CONTROLLERS = ("tracking", "feedforward", "no_retract")


class SimulationError(FloatingPointError):
    """The simulation produced a non-finite state; ``log`` holds the ticks so far."""

    def __init__(self, message: str, log: TrajectoryLog):
        super().__init__(message)
        self.log = log


@dataclass(frozen=True)
class ContactModel:
    stiffness: float = 100000.0
    damping: float = 1000.0
    friction: float = 0.8
    tangential_damping: float = 2000.0
    penetration_tolerance: float = 0.001

    def __post_init__(self):
        for name in ("stiffness", "damping", "friction", "tangential_damping", "penetration_tolerance"):
            if not getattr(self, name) > 0:
                raise ValueError(f"ContactModel.{name} must be positive")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass(frozen=True)
class ModelErrorSpec:
    tail_mass_scale: float = 1.0
    body_mass_scale: float = 1.0
    body_inertia_scale: float = 1.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")


@dataclass(frozen=True)
class Scenario:
    """One drop: initial attitude (rad, yaw-pitch-roll), height of the body (m)."""

    euler: tuple[float, float, float] = (0.0, 0.0, 0.0)
    height: float = 1.85
    velocity: tuple[float, float, float] = (0.0, 0.0, 0.0)
    omega: tuple[float, float, float] = (0.0, 0.0, 0.0)
    model_error: ModelErrorSpec = field(default_factory=ModelErrorSpec)
    friction: float = 0.8
    dt: float = 0.001
    max_time: float = 3.0
    controller: str = "tracking"

    def __post_init__(self):
        object.__setattr__(self, "euler", tuple(float(a) for a in self.euler))
        object.__setattr__(self, "velocity", tuple(float(a) for a in self.velocity))
        object.__setattr__(self, "omega", tuple(float(a) for a in self.omega))
        if isinstance(self.model_error, dict):
            object.__setattr__(self, "model_error", ModelErrorSpec(**self.model_error))
        if not self.height > 0:
            raise ValueError("height must be positive")
        if not self.friction > 0:
            raise ValueError("friction must be positive")
        if not self.dt > 0 or not self.max_time > 0:
            raise ValueError("dt and max_time must be positive")
        if self.controller not in CONTROLLERS:
            raise ValueError(f"controller must be one of {CONTROLLERS}")

    @classmethod
    def from_degrees(cls, yaw: float, pitch: float, roll: float, **kw) -> Scenario:
        return cls(euler=tuple(math.radians(a) for a in (yaw, pitch, roll)), **kw)

    @property
    def euler_deg(self) -> tuple[float, float, float]:
        return tuple(round(math.degrees(a), 9) for a in self.euler)

    def initial_quat(self) -> np.ndarray:
        return quat_from_euler(*self.euler)

    def initial_state(self, model: Model) -> np.ndarray:
        nj = model.n_joints
        x = np.zeros(model.nx)
        x[2] = self.height
        x[3:7] = self.initial_quat()
        x[7 : 7 + nj] = [0.0, 0.0, model.params.tail_length_range[1]][:nj]
        x[7 + nj : 10 + nj] = self.velocity
        x[10 + nj : 13 + nj] = self.omega
        return x

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["euler_deg"] = list(self.euler_deg)
        return d


def inject_model_error(model: Model, spec: ModelErrorSpec | dict | None) -> Model:
    """A simulation model with scaled inertial parameters."""
    if spec is None:
        spec = ModelErrorSpec()
    elif isinstance(spec, dict):
        spec = ModelErrorSpec(**spec)
    p = model.params
    params = dataclasses.replace(
        p,
        tail_mass=p.tail_mass * spec.tail_mass_scale,
        body_mass=p.body_mass * spec.body_mass_scale,
        body_inertia=tuple(i * spec.body_inertia_scale for i in p.body_inertia),
    )
    if params == p:
        return model if model.n_joints == 3 else build_sim_model(p)
    return build_sim_model(params)


# ----------------------------------------------------------------------------
# contact


def contact_force(position, velocity, contact: ContactModel) -> np.ndarray:
    """Ground reaction on a point at ``position`` moving with ``velocity``.

    Accepts single points ``(3,)`` or stacks ``(n, 3)``.
    """
    pos = np.asarray(position, dtype=float)
    vel = np.asarray(velocity, dtype=float)
    single = pos.ndim == 1
    pos = np.atleast_2d(pos)
    vel = np.atleast_2d(vel)
    pen = -pos[:, 2]
    normal = np.where(pen > 0, np.maximum(0.0, contact.stiffness * pen - contact.damping * vel[:, 2]), 0.0)
    vt = vel[:, :2]
    ft = -contact.tangential_damping * vt
    mag = np.linalg.norm(ft, axis=1)
    cap = contact.friction * normal
    scale = np.where(mag > cap, cap / np.where(mag > 0, mag, 1.0), 1.0)
    out = np.column_stack([ft * scale[:, None], normal])
    out[pen <= 0] = 0.0
    return out[0] if single else out


def detect_contact(feet_z, contact: ContactModel | None = None, *, accel_z=None, accel_threshold: float | None = None):
    """Per-foot contact flags.

    Geometric mode: penetration beyond the tolerance. If ``accel_z`` (a window
    of vertical body accelerations, most recent last) is given, returns
    instead whether the last tick shows a jump above ``accel_threshold``.
    """
    if accel_z is not None:
        a = np.asarray(accel_z, dtype=float)
        if a.size < 2:
            return False
        thr = 30.0 if accel_threshold is None else accel_threshold
        return bool(a[-1] - a[-2] > thr)
    tol = (contact or ContactModel()).penetration_tolerance
    return -np.asarray(feet_z, dtype=float) > tol


def first_acceleration_jump(accel_z, threshold: float = 30.0) -> int | None:
    """Index of the first tick whose vertical acceleration jumps by more than ``threshold``."""
    a = np.asarray(accel_z, dtype=float)
    idx = np.nonzero(np.diff(a) > threshold)[0]
    return None if idx.size == 0 else int(idx[0] + 1)


# ----------------------------------------------------------------------------
# log


@dataclass
class TrajectoryLog:
    """Per-tick record of one drop plus its summary fields."""

    t: np.ndarray
    states: np.ndarray
    torques: np.ndarray
    tail_length_cmd: np.ndarray
    foot_forces: np.ndarray
    foot_contact: np.ndarray
    leg_lengths: np.ndarray
    phase: np.ndarray
    attitude_error: np.ndarray
    tracking_cost: np.ndarray
    body_penetration: np.ndarray
    foot_penetration: np.ndarray
    scenario: dict = field(default_factory=dict)
    touchdown_time: float | None = None
    touchdown_euler: tuple | None = None
    retract_time: float | None = None
    early_touchdown: bool = False
    aborted: bool = False
    message: str = ""
    dt: float = 0.001

    @property
    def n_ticks(self) -> int:
        return self.t.size

    def euler(self) -> np.ndarray:
        return np.array([euler_from_quat(q, strict=False) for q in self.states[:, 3:7]])

    def tail_length(self) -> np.ndarray:
        return self.states[:, 9]

    def omega(self) -> np.ndarray:
        return self.states[:, 13:16]

    def phase_transitions(self) -> list[tuple[float, int]]:
        """``(t, phase)`` at release and at every phase change."""
        ph = self.phase
        if ph.size == 0:
            return []
        idx = np.concatenate([[0], np.nonzero(np.diff(ph))[0] + 1])
        return [(float(self.t[i]), int(ph[i])) for i in idx]

    @property
    def settled(self) -> bool:
        return score_landing(self).settle_time is not None


class _Recorder:
    def __init__(self, nx):
        self.rows: dict[str, list] = {k: [] for k in _LOG_ARRAYS}

    def add(self, **kw):
        for k, v in kw.items():
            self.rows[k].append(v)

    def build(self, **summary) -> TrajectoryLog:
        arrays = {}
        for k in _LOG_ARRAYS:
            arrays[k] = np.array(self.rows[k], dtype=bool if k == "foot_contact" else (int if k == "phase" else float))
        return TrajectoryLog(**arrays, **summary)


_LOG_ARRAYS = (
    "t",
    "states",
    "torques",
    "tail_length_cmd",
    "foot_forces",
    "foot_contact",
    "leg_lengths",
    "phase",
    "attitude_error",
    "tracking_cost",
    "body_penetration",
    "foot_penetration",
)


# ----------------------------------------------------------------------------
# plant


class _Plant:
    """Body + tail + massless legs with ground contact, stepped by the kernels."""

    LEG_RATE_BRACKET = 50.0
    BISECTION_STEPS = 48
    STOP_STIFFNESS = 2.0e5
    STOP_DAMPING = 400.0
    PITCH_STOP_STIFFNESS = 5000.0
    PITCH_STOP_DAMPING = 20.0

    def __init__(self, model: Model, contact: ContactModel, config: PhaseConfig):
        self.model = model
        p = model.params
        self.L0 = p.leg_rest_length
        self.hips = np.asarray(p.foot_offsets, dtype=float) + np.array([0.0, 0.0, self.L0])
        if self.hips.shape != (4, 3):
            raise ValueError("the drop plant needs exactly four feet")
        self.vector = np.ascontiguousarray(
            np.concatenate(
                [
                    [self.L0],
                    self.hips.ravel(),
                    p.body_half_extents,
                    p.tail_length_range,
                    [contact.stiffness, contact.damping, contact.friction, contact.tangential_damping],
                    [config.stance_stiffness, config.stance_damping, config.stance_angular_damping, config.stance_max_force],
                    [self.STOP_STIFFNESS, self.STOP_DAMPING, self.LEG_RATE_BRACKET, self.BISECTION_STEPS],
                    [p.tail_pitch_limit, self.PITCH_STOP_STIFFNESS, self.PITCH_STOP_DAMPING],
                ]
            ),
            dtype=float,
        )

    def contacts(self, x, L, stance: bool):
        """``(leg rates, foot forces, foot positions, non-foot penetration)``."""
        return kernels.plant_contacts(self.model.kernel_params, self.vector, x, L, stance)

    def step(self, x, L, tau, dt, stance: bool):
        return kernels.plant_step(self.model.kernel_params, self.vector, x, L, np.ascontiguousarray(tau), dt, stance)


# ----------------------------------------------------------------------------
# planning and simulation


def touchdown_height(params: RobotParams) -> float:
    """Body height at which the lowest foot of a level robot touches the ground."""
    return -min(o[2] for o in params.foot_offsets)


def resolve_phase_config(config: PhaseConfig, scenario: Scenario, params: RobotParams) -> PhaseConfig:
    """Fill in ``h_s`` from the drop height and copy the tail range from ``params``."""
    lo, hi = params.tail_length_range
    cfg = dataclasses.replace(config, tail_length_min=lo, tail_length_max=hi)
    if cfg.trigger_height is None:
        h = trigger_height(scenario.height, touchdown_height(params), params.gravity, cfg)
        cfg = dataclasses.replace(cfg, trigger_height=h)
    return cfg


def planning_budget(scenario: Scenario, params: RobotParams, config: PhaseConfig, budget: float | None = None) -> float:
    """Reorientation budget: ``budget`` if given, else the time at which ``h_s`` is reached."""
    if budget is not None:
        return budget
    cfg = resolve_phase_config(config, scenario, params)
    t_s = math.sqrt(2.0 * max(0.0, scenario.height - cfg.trigger_height) / params.gravity)
    return min(config.flight_budget, t_s) if t_s > 0 else config.flight_budget


def plan_scenario(
    scenario: Scenario,
    params: RobotParams,
    settings: SolverSettings | None = None,
    budget: float = 0.4,
    dt: float = 0.002,
    **problem_kw,
) -> Solution:
    """Plan the reorientation from the scenario's initial attitude to level."""
    model = build_planning_model(params)
    N = max(1, int(round(budget / dt)))
    problem = OCProblem(model, scenario.initial_state(model), N=N, dt=dt, **problem_kw)
    return solve(problem, settings)


def zero_solution(params: RobotParams, scenario: Scenario, budget: float = 0.4, dt: float = 0.002) -> Solution:
    """A do-nothing plan: zero controls, zero gains."""
    model = build_planning_model(params)
    N = max(1, int(round(budget / dt)))
    problem = OCProblem(model, scenario.initial_state(model), N=N, dt=dt)
    U = np.zeros((N, 2))
    X = problem.rollout(U)
    return Solution(X=X, U=U, K=np.zeros((N, 2, model.ndx)), k=np.zeros((N, 2)), dt=dt, objective=problem.total_cost(X, U), converged=True)


def simulate(
    scenario: Scenario,
    solution: Solution | None,
    params: RobotParams | None = None,
    config: PhaseConfig | None = None,
    contact: ContactModel | None = None,
) -> TrajectoryLog:
    """Run one drop and return its log (deterministic for identical inputs)."""
    params = params or RobotParams()
    config = resolve_phase_config(config or PhaseConfig(), scenario, params)
    contact = dataclasses.replace(contact or ContactModel(), friction=scenario.friction)
    model = inject_model_error(build_sim_model(params), scenario.model_error)
    plant = _Plant(model, contact, config)
    if solution is None:
        solution = zero_solution(params, scenario)
    plan_model = build_planning_model(params)
    if scenario.controller == "feedforward":
        policy = TrackingPolicy.feedforward(solution, plan_model)
    else:
        policy = TrackingPolicy.from_solution(solution, plan_model)
    config = dataclasses.replace(config, flight_budget=min(config.flight_budget, policy.duration))
    retract = scenario.controller != "no_retract"
    lo_tau, hi_tau = model.torque_limits
    qd = np.asarray(config.desired_quat)
    dt = scenario.dt
    n_steps = int(round(scenario.max_time / dt))

    x = scenario.initial_state(model)
    L = np.full(4, plant.L0)
    phase = PhaseState()
    rec = _Recorder(model.nx)
    hold_angles = None
    calm_since = None
    summary = dict(scenario=scenario.to_dict(), dt=dt)

    for i in range(n_steps + 1):
        t = round(i * dt, 12)
        R = rotation_from_quat(x[3:7])
        foot_z = x[2] + (plant.hips[:, 2] - L) * R[2, 2] + plant.hips[:, 0] * R[2, 0] + plant.hips[:, 1] * R[2, 1]
        contacts = detect_contact(foot_z, contact)
        new_phase = step_phase(phase, t, x, contacts, config, tail_length=x[9])
        if new_phase.phase != phase.phase:
            if new_phase.phase == Phase.STANCE and summary.get("touchdown_time") is None:
                summary["touchdown_time"] = t
                summary["touchdown_euler"] = tuple(euler_from_quat(x[3:7], strict=False))
            if new_phase.phase == Phase.FLIGHT_RETRACT:
                summary["retract_time"] = t
            hold_angles = x[7:9].copy()
        phase = new_phase

        # controls
        tau = np.zeros(3)
        track_cost = 0.0
        if phase.phase == Phase.FLIGHT_REORIENT:
            cmd = tracking_control(t, x, policy)
            tau[0:2] = cmd.tau
            xr, _, _, _ = policy.reference(t)
            track_cost = attitude_error(xr[3:7], x[3:7])
            ell_cmd = config.tail_length_max
        else:
            if phase.phase == Phase.FLIGHT_RETRACT:
                tau[0:2] = attitude_hold_torque(x, model, config, lo_tau, hi_tau)
            else:
                tau[0:2] = joint_hold_torque(x[7:9], x[16:18], hold_angles, config, lo_tau, hi_tau)
            if retract:
                ell_cmd = retraction_command(t - _retract_start(phase), config, phase.retract_start_length)
            else:
                ell_cmd = config.tail_length_max
        tau[2] = retraction_force(x[9], x[18], ell_cmd, config)
        stance = phase.phase == Phase.STANCE

        # record the tick, then integrate to the next
        _, G, foot_pos, body_pen = plant.contacts(x, L, stance)
        rec.add(
            t=t,
            states=x.copy(),
            torques=tau.copy(),
            tail_length_cmd=ell_cmd,
            foot_forces=G.copy(),
            foot_contact=contacts.copy(),
            leg_lengths=L.copy(),
            phase=int(phase.phase),
            attitude_error=attitude_error(qd, x[3:7]),
            tracking_cost=track_cost,
            body_penetration=body_pen,
            foot_penetration=float(max(0.0, -foot_pos[:, 2].min())),
        )
        if stance:
            calm = np.linalg.norm(x[13:16]) < _SETTLE_RATE
            calm_since = (calm_since if calm_since is not None else t) if calm else None
            if calm_since is not None and t - calm_since >= _SETTLE_WINDOW:
                break
        if i == n_steps:
            break
        try:
            xn, Ln = plant.step(x, L, tau, dt, stance)
        except FloatingPointError:
            xn = np.full_like(x, np.nan)
            Ln = L
        if not (np.all(np.isfinite(xn)) and np.all(np.isfinite(Ln))):
            summary.update(aborted=True, message=f"non-finite state at t={t + dt:.4f} s in phase {phase.phase.name}")
            built = rec.build(**summary, early_touchdown=phase.early_touchdown)
            raise SimulationError(summary["message"], built)
        x, L = xn, Ln

    return rec.build(**summary, early_touchdown=phase.early_touchdown)


_SETTLE_RATE = 0.2
_SETTLE_WINDOW = 0.5


def _retract_start(phase: PhaseState) -> float:
    for t, ph in phase.transitions:
        if ph == Phase.FLIGHT_RETRACT:
            return t
    return phase.entry_time


# ----------------------------------------------------------------------------
# scoring


@dataclass
class LandingVerdict:
    success: bool
    touchdown_euler: tuple | None
    touchdown_time: float | None
    settle_time: float | None
    max_penetration: float
    max_body_penetration: float
    all_feet_time: float | None
    early_touchdown: bool
    reasons: list[str] = field(default_factory=list)

    @property
    def failure_reason(self) -> str | None:
        return ",".join(self.reasons) if self.reasons else None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["failure_reason"] = self.failure_reason
        if self.touchdown_euler is not None:
            d["touchdown_euler_deg"] = [math.degrees(a) for a in self.touchdown_euler]
        return d


ATTITUDE_LIMIT = math.radians(10.0)
ALL_FEET_WINDOW = 0.3


def score_landing(log: TrajectoryLog) -> LandingVerdict:
    reasons = []
    td = log.touchdown_time
    eul = log.touchdown_euler
    if td is None:
        reasons.append("no touchdown")
    elif abs(eul[1]) > ATTITUDE_LIMIT or abs(eul[2]) > ATTITUDE_LIMIT:
        reasons.append("attitude")
    all_feet = None
    if td is not None:
        every = np.all(log.foot_contact, axis=1) & (log.t <= td + ALL_FEET_WINDOW + 1e-12) & (log.t >= td)
        if np.any(every):
            all_feet = float(log.t[np.argmax(every)])
        else:
            reasons.append("feet")
    settle = None
    if td is not None:
        rate = np.linalg.norm(log.omega(), axis=1)
        calm = (rate < _SETTLE_RATE) & (log.t >= td)
        # start of the final calm run
        if calm[-1]:
            run = np.nonzero(~calm)[0]
            start = int(run[-1] + 1) if run.size else 0
            if log.t[-1] - log.t[start] >= _SETTLE_WINDOW - 1e-9:
                settle = float(log.t[start])
        if settle is None:
            reasons.append("not settled")
    body_pen = float(log.body_penetration.max()) if log.n_ticks else 0.0
    if body_pen > 0:
        reasons.append("body contact")
    if log.aborted:
        reasons.append("aborted")
    pen = float(max(body_pen, log.foot_penetration.max() if log.n_ticks else 0.0))
    return LandingVerdict(
        success=not reasons,
        touchdown_euler=eul,
        touchdown_time=td,
        settle_time=settle,
        max_penetration=pen,
        max_body_penetration=body_pen,
        all_feet_time=all_feet,
        early_touchdown=log.early_touchdown,
        reasons=reasons,
    )


def angular_momentum_trace(log: TrajectoryLog, params: RobotParams) -> np.ndarray:
    model = build_sim_model(params)
    return np.array([angular_momentum_about_com(model, x) for x in log.states])


# ----------------------------------------------------------------------------
# batch


@dataclass
class BatchRow:
    scenario: Scenario
    plan_converged: bool
    plan_iterations: int
    verdict: LandingVerdict | None
    error: str | None = None

    @property
    def success(self) -> bool:
        return self.verdict is not None and self.verdict.success

    def to_dict(self) -> dict:
        return {
            "yaw_deg": self.scenario.euler_deg[0],
            "pitch_deg": self.scenario.euler_deg[1],
            "roll_deg": self.scenario.euler_deg[2],
            "height": self.scenario.height,
            "plan_converged": self.plan_converged,
            "plan_iterations": self.plan_iterations,
            "success": self.success,
            "failure_reason": None if self.verdict is None else self.verdict.failure_reason,
            "touchdown_time": None if self.verdict is None else self.verdict.touchdown_time,
            "error": self.error,
        }


@dataclass
class BatchSummary:
    rows: list[BatchRow]

    @property
    def n_success(self) -> int:
        return sum(r.success for r in self.rows)

    @property
    def success_rate(self) -> float:
        return self.n_success / len(self.rows) if self.rows else 0.0

    @property
    def nonconverged(self) -> list[Scenario]:
        return [r.scenario for r in self.rows if not r.plan_converged]

    def to_dict(self) -> dict:
        return {
            "n_scenarios": len(self.rows),
            "n_success": self.n_success,
            "success_rate": self.success_rate,
            "n_plan_nonconverged": len(self.nonconverged),
            "rows": [r.to_dict() for r in self.rows],
        }


def run_scenario(
    scenario: Scenario,
    params: RobotParams | None = None,
    settings: SolverSettings | None = None,
    config: PhaseConfig | None = None,
    contact: ContactModel | None = None,
    budget: float | None = None,
    solution: Solution | None = None,
) -> tuple[Solution, TrajectoryLog, LandingVerdict]:
    """Plan (unless ``solution`` is given), simulate and score one scenario."""
    params = params or RobotParams()
    config = config or PhaseConfig()
    if solution is None:
        solution = plan_scenario(scenario, params, settings, budget=planning_budget(scenario, params, config, budget))
    log = simulate(scenario, solution, params, config, contact)
    return solution, log, score_landing(log)


def _batch_one(args) -> BatchRow:
    scenario, params, settings, config, contact, budget = args
    try:
        sol, _, verdict = run_scenario(scenario, params, settings, config, contact, budget)
        return BatchRow(scenario, sol.converged, sol.iterations, verdict)
    except (FloatingPointError, ValueError) as exc:
        return BatchRow(scenario, False, 0, None, error=str(exc))


def batch_run(
    scenarios,
    params: RobotParams | None = None,
    settings: SolverSettings | None = None,
    config: PhaseConfig | None = None,
    contact: ContactModel | None = None,
    budget: float | None = None,
    jobs: int = 1,
) -> BatchSummary:
    """Plan and simulate every scenario; rows come back in input order."""
    scenarios = list(scenarios)
    if not scenarios:
        raise ValueError("scenario grid is empty")
    args = [(s, params, settings, config, contact, budget) for s in scenarios]
    if jobs <= 1:
        rows = [_batch_one(a) for a in args]
    else:
        with cf.ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_batch_one, args))
    return BatchSummary(rows)


def orientation_grid(values_deg=(-30.0, 0.0, 30.0), height: float = 1.85, **kw) -> list[Scenario]:
    return [Scenario.from_degrees(y, p, r, height=height, **kw) for y in values_deg for p in values_deg for r in values_deg]
