"""``tailfall`` command line: plan, drop, batch, report.

Exit status: 0 on success, 1 for bad input (config, files), 2 for usage
errors, 3 when a plan does not converge, 4 when the simulation aborts and 5
when a landing fails.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import io
from .config import ConfigError, ToolkitConfig
from .model import build_planning_model
from .sim import (
    ModelErrorSpec,
    Scenario,
    SimulationError,
    batch_run,
    orientation_grid,
    plan_scenario,
    planning_budget,
    score_landing,
    simulate,
    zero_solution,
)
from .spatial import attitude_error

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_USAGE = 2
EXIT_PLAN_FAILED = 3
EXIT_SIM_ABORTED = 4
EXIT_LANDING_FAILED = 5

log = logging.getLogger("tailfall")


# -- helpers ---------------------------------------------------------------------


def _load_config(args) -> ToolkitConfig:
    return ToolkitConfig.load(args.config) if args.config else ToolkitConfig()


def _out_dir(args, config: ToolkitConfig) -> Path:
    return Path(args.out) if args.out else Path(config.output.directory)


def _scenario(args, config: ToolkitConfig) -> Scenario:
    return Scenario.from_degrees(
        args.yaw,
        args.pitch,
        args.roll,
        height=args.height,
        friction=config.contact.friction,
        model_error=ModelErrorSpec(tail_mass_scale=getattr(args, "tail_mass_scale", 1.0)),
        controller="no_retract" if getattr(args, "no_retract", False) else "tracking",
    )


# a plan must remove at least this share of the error left by doing nothing
MIN_IMPROVEMENT = 0.5


def _plan(scenario: Scenario, config: ToolkitConfig, budget):
    budget = planning_budget(scenario, config.robot, config.phase, budget)
    sol = plan_scenario(scenario, config.robot, config.solver, budget=budget)
    qd = np.asarray(config.phase.desired_quat)
    e_end = attitude_error(qd, sol.X[-1][3:7])
    e_free = attitude_error(qd, zero_solution(config.robot, scenario, budget).X[-1][3:7])
    if sol.converged and e_end > MIN_IMPROVEMENT * e_free + 1e-9:
        sol.converged = False
        sol.message = f"attitude unmet: terminal error {e_end:.4g} against {e_free:.4g} with the tail idle"
    return sol, budget, e_end


def _plan_meta(scenario: Scenario, config: ToolkitConfig, budget: float, e_end: float) -> dict:
    return {
        "config_hash": config.hash,
        "config": config.to_dict(),
        "scenario": scenario.to_dict(),
        "budget": budget,
        "terminal_attitude_error": e_end,
    }


def _report_plan(sol, e_end: float) -> None:
    status = "converged" if sol.converged else "FAILED"
    print(f"plan {status}: {sol.iterations} iterations, objective {sol.objective:.6g}, terminal e {e_end:.4g}")
    if not sol.converged:
        print(f"  {sol.message}")


# -- verbs ----------------------------------------------------------------------------


def cmd_plan(args) -> int:
    config = _load_config(args)
    scenario = _scenario(args, config)
    sol, budget, e_end = _plan(scenario, config, args.budget)
    out = Path(args.out) if args.out else Path(config.output.directory) / "solution.json"
    io.save_solution(out, sol, **_plan_meta(scenario, config, budget, e_end))
    _report_plan(sol, e_end)
    print(f"wrote {out}")
    return EXIT_OK if sol.converged else EXIT_PLAN_FAILED


def cmd_drop(args) -> int:
    config = _load_config(args)
    scenario = _scenario(args, config)
    out = _out_dir(args, config)
    if args.solution and not args.replan:
        sol, meta = io.load_solution(args.solution)
        x0 = scenario.initial_state(build_planning_model(config.robot))
        if sol.X.shape[1] != x0.size or not np.allclose(sol.X[0], x0, atol=1e-9):
            raise io.ArtifactError(f"{args.solution}: plan starts from a different state than this scenario (use --replan)")
        if meta.get("config_hash") not in (None, config.hash):
            log.warning("solution was planned under config %s, dropping under %s", meta.get("config_hash"), config.hash)
    else:
        sol, budget, e_end = _plan(scenario, config, args.budget)
        io.save_solution(out / "solution.json", sol, **_plan_meta(scenario, config, budget, e_end))
        _report_plan(sol, e_end)

    try:
        trajectory = simulate(scenario, sol, config.robot, config.phase, config.contact)
        code = EXIT_OK
    except SimulationError as exc:
        trajectory = exc.log
        code = EXIT_SIM_ABORTED
    verdict = score_landing(trajectory)
    if config.output.write_log:
        io.write_log_csv(out / "log.csv", trajectory, config.hash, config.output.float_format)
    io.write_json(out / "summary.json", io.drop_summary(trajectory, verdict, config, sol))

    if code == EXIT_SIM_ABORTED:
        print(f"simulation aborted: {trajectory.message}")
        return code
    eul = verdict.touchdown_euler
    eul_txt = "n/a" if eul is None else "[" + ", ".join(f"{math.degrees(a):.1f}" for a in eul) + "] deg"
    td = "none" if verdict.touchdown_time is None else f"{verdict.touchdown_time:.3f} s"
    print(f"touchdown {td}, yaw/pitch/roll {eul_txt}")
    print("landing: " + ("success" if verdict.success else f"FAILED ({verdict.failure_reason})"))
    print(f"wrote {out}")
    if not sol.converged:
        return EXIT_PLAN_FAILED
    return EXIT_OK if verdict.success else EXIT_LANDING_FAILED


def cmd_batch(args) -> int:
    config = _load_config(args)
    out = _out_dir(args, config)
    grid = orientation_grid(
        tuple(args.values),
        height=args.height,
        friction=config.contact.friction,
        model_error=ModelErrorSpec(tail_mass_scale=args.tail_mass_scale),
        controller="no_retract" if args.no_retract else "tracking",
    )
    summary = batch_run(grid, config.robot, config.solver, config.phase, config.contact, args.budget, jobs=args.jobs)
    for i, row in enumerate(summary.rows):
        io.write_json(out / "scenarios" / f"{i:03d}.json", {"config_hash": config.hash, **row.to_dict()})
    io.write_batch_csv(out / "batch.csv", summary, config.hash)
    io.write_json(out / "batch.json", {"config_hash": config.hash, "config": config.to_dict(), **summary.to_dict()})

    n = len(summary.rows)
    failed_plans = [r for r in summary.rows if not r.plan_converged]
    print(f"{summary.n_success}/{n} landings succeeded")
    if failed_plans:
        print(f"{len(failed_plans)} plan(s) did not converge:")
        for r in failed_plans:
            print("  yaw/pitch/roll", r.scenario.euler_deg, r.error or "")
    for r in summary.rows:
        if r.plan_converged and not r.success:
            print("  landing failed:", r.scenario.euler_deg, r.verdict.failure_reason if r.verdict else r.error)
    print(f"wrote {out}")
    need = n if args.min_success is None else args.min_success
    if summary.n_success >= need:
        return EXIT_OK
    return EXIT_PLAN_FAILED if failed_plans else EXIT_LANDING_FAILED


def cmd_report(args) -> int:
    out = Path(args.out) if args.out else Path("report.csv")
    io.write_report(out, args.logs, force=args.force)
    print(f"wrote {out}")
    return EXIT_OK


# -- parser ----------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tailfall", description="Tail-assisted aerial reorientation: plan, drop, batch, report.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log solver progress")
    sub = parser.add_subparsers(dest="verb", required=True)

    def common(p, orientation=True):
        p.add_argument("--config", help="YAML toolkit config")
        p.add_argument("--out", help="output path (file for plan/report, directory otherwise)")
        p.add_argument("--height", type=float, default=1.85, help="drop height of the body, m")
        p.add_argument("--budget", type=float, default=None, help="reorientation time budget, s (default: from h_s)")
        if orientation:
            p.add_argument("--yaw", type=float, default=0.0, help="initial yaw, deg")
            p.add_argument("--pitch", type=float, default=0.0, help="initial pitch, deg")
            p.add_argument("--roll", type=float, default=0.0, help="initial roll, deg")

    p = sub.add_parser("plan", help="optimize the reorientation trajectory offline")
    common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("drop", help="simulate one drop and score the landing")
    common(p)
    p.add_argument("--solution", help="solution file from 'plan'")
    p.add_argument("--replan", action="store_true", help="plan afresh even if --solution is given")
    p.add_argument("--tail-mass-scale", type=float, default=1.0, help="sim-only tail mass factor (model error)")
    p.add_argument("--no-retract", action="store_true", help="keep the tail extended (ablation)")
    p.set_defaults(func=cmd_drop)

    p = sub.add_parser("batch", help="sweep a yaw/pitch/roll grid")
    common(p, orientation=False)
    p.add_argument("--values", type=float, nargs="+", default=[-30.0, 0.0, 30.0], help="grid values per axis, deg")
    p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    p.add_argument("--min-success", type=int, default=None, help="successes needed for exit 0 (default: all)")
    p.add_argument("--tail-mass-scale", type=float, default=1.0)
    p.add_argument("--no-retract", action="store_true")
    p.set_defaults(func=cmd_batch)

    p = sub.add_parser("report", help="merge logs into plot-ready columns")
    p.add_argument("logs", nargs="+", help="log CSV files from 'drop'")
    p.add_argument("--out", help="output CSV (default report.csv)")
    p.add_argument("--force", action="store_true", help="merge logs from different configs")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if getattr(args, "jobs", 1) < 1:
            parser.error("--jobs must be at least 1")
        return args.func(args)
    except (ConfigError, io.ArtifactError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
