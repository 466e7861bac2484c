"""Time the compiled kernels against their pure-Python twins.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from tailfall import _kernels_py
from tailfall.control import PhaseConfig
from tailfall.model import RobotParams, SystemState, build_planning_model, build_sim_model
from tailfall.sim import ContactModel, _Plant
from tailfall.spatial import quat_from_euler

try:
    from tailfall import _kernels as compiled
except ImportError:
    compiled = None


def cases():
    params = RobotParams()
    plan = build_planning_model(params)
    sim = build_sim_model(params)
    P, Ps = plan.kernel_params, sim.kernel_params
    x = SystemState.at_rest(plan, p=(0, 0, 1.85), quat=quat_from_euler(0.3, 0.4, 0.5)).to_vector()
    x[7:9] = 0.2, -0.1
    x[9:] = np.linspace(-0.5, 0.5, 8)
    tau = np.array([1.0, -2.0])
    U = np.tile(tau, (200, 1))
    X = _kernels_py.rollout(P, 2, x, U, 0.002)

    plant = _Plant(sim, ContactModel(), PhaseConfig())
    xs = SystemState.at_rest(sim, p=(0, 0, plant.L0 - 0.005)).to_vector()
    L = np.full(4, plant.L0 - 0.005)
    taus = np.zeros(3)

    return {
        "forward_dynamics": lambda k: k.forward_dynamics(P, 2, x, tau),
        "rollout (N=200)": lambda k: k.rollout(P, 2, x, U, 0.002),
        "linearize (N=200)": lambda k: k.linearize(P, 2, X, U, 0.002),
        "plant_step (stance)": lambda k: k.plant_step(Ps, plant.vector, xs, L, taus, 0.001, True),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if compiled is None:
        raise SystemExit("compiled extension not built; run pip install -e . first")
    print(f"{'kernel':<22}{'python (ms)':>14}{'compiled (ms)':>16}{'speed-up':>11}")
    for name, fn in cases().items():
        row = []
        for k in (_kernels_py, compiled):
            n, _ = timeit.Timer(lambda: fn(k)).autorange()
            best = min(timeit.Timer(lambda: fn(k)).repeat(args.repeat, n)) / n
            row.append(best * 1e3)
        print(f"{name:<22}{row[0]:>14.4f}{row[1]:>16.4f}{row[0] / row[1]:>10.1f}x")


if __name__ == "__main__":
    main()
