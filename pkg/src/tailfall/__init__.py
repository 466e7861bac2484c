"""Aerial reorientation and drop simulation for a quadruped with a
pitch/yaw/telescoping inertial tail."""

from .config import ConfigError, ToolkitConfig
from .control import Phase, PhaseConfig, PhaseState, TrackingPolicy
from .kernels import BACKEND
from .model import (
    Model,
    ModelError,
    RobotParams,
    SystemState,
    build_planning_model,
    build_sim_model,
)
from .sim import (
    ContactModel,
    LandingVerdict,
    ModelErrorSpec,
    Scenario,
    SimulationError,
    TrajectoryLog,
    batch_run,
    orientation_grid,
    plan_scenario,
    run_scenario,
    score_landing,
    simulate,
)
from .trajopt import OCProblem, Solution, SolverSettings, solve

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "ConfigError",
    "ContactModel",
    "LandingVerdict",
    "Model",
    "ModelError",
    "ModelErrorSpec",
    "OCProblem",
    "Phase",
    "PhaseConfig",
    "PhaseState",
    "RobotParams",
    "Scenario",
    "SimulationError",
    "Solution",
    "SolverSettings",
    "SystemState",
    "ToolkitConfig",
    "TrackingPolicy",
    "TrajectoryLog",
    "batch_run",
    "build_planning_model",
    "build_sim_model",
    "orientation_grid",
    "plan_scenario",
    "run_scenario",
    "score_landing",
    "simulate",
    "solve",
]
