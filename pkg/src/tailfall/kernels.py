"""Backend selection for the dynamics kernels.

The compiled extension is used when it imports; otherwise the numpy twin is
used. Setting ``TAILFALL_PURE_PYTHON=1`` forces the numpy twin.
"""

from __future__ import annotations

import os

from . import _kernels_py

if os.environ.get("TAILFALL_PURE_PYTHON", "") not in ("", "0"):
    backend = _kernels_py
    BACKEND = "python"
else:
    try:
        from . import _kernels as backend  # type: ignore[no-redef]

        BACKEND = "compiled"
    except ImportError:
        backend = _kernels_py
        BACKEND = "python"

forward_dynamics = backend.forward_dynamics
rk4_step = backend.rk4_step
rollout = backend.rollout
linearize = backend.linearize
retract = backend.retract
difference = backend.difference
plant_step = backend.plant_step
plant_contacts = backend.plant_contacts

__all__ = [
    "BACKEND",
    "backend",
    "forward_dynamics",
    "rk4_step",
    "rollout",
    "linearize",
    "retract",
    "difference",
    "plant_step",
    "plant_contacts",
]
