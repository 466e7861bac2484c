from .ddp import DivergenceError, Solution, SolverSettings, solve
from .lq import LQProblem, double_integrator, riccati_controls
from .problem import (
    OCProblem,
    attitude_error_derivatives,
    discretize,
    dynamics_derivatives,
    stage_cost,
    terminal_cost,
)

__all__ = [
    "DivergenceError",
    "LQProblem",
    "OCProblem",
    "Solution",
    "SolverSettings",
    "attitude_error_derivatives",
    "discretize",
    "double_integrator",
    "dynamics_derivatives",
    "riccati_controls",
    "solve",
    "stage_cost",
    "terminal_cost",
]
