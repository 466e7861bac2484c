"""Artifact files: solution JSON, trajectory-log CSV, summary JSON and
plot-ready report series.

Every file carries the hash of the configuration that produced it. CSV files
start with ``#``-prefixed ``key: value`` metadata lines followed by one header
row; all writes go through a temporary file and an atomic rename.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from pathlib import Path

import numpy as np

from .sim import TrajectoryLog
from .trajopt import Solution

SOLUTION_FORMAT = "tailfall-solution/1"
LOG_FORMAT = "tailfall-log/1"
REPORT_FORMAT = "tailfall-report/1"


class ArtifactError(ValueError):
    """Unreadable artifact or mismatched inputs."""


def _atomic_write(path, text: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def write_json(path, data: dict) -> Path:
    return _atomic_write(path, json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ArtifactError(f"{path}: {exc}") from exc


# -- solutions -------------------------------------------------------------------


def solution_to_dict(solution: Solution, **meta) -> dict:
    return {
        "format": SOLUTION_FORMAT,
        "states": solution.X,
        "controls": solution.U,
        "gains": solution.K,
        "feedforward": solution.k,
        "dt": solution.dt,
        "report": {
            "converged": solution.converged,
            "iterations": solution.iterations,
            "objective": solution.objective,
            "stationarity": solution.stationarity if math.isfinite(solution.stationarity) else None,
            "torque_violation": solution.torque_violation,
            "path_violation": solution.path_violation,
            "cost_history": list(solution.cost_history),
            "outer_history": list(solution.outer_history),
            "message": solution.message,
        },
        **meta,
    }


def save_solution(path, solution: Solution, **meta) -> Path:
    return write_json(path, solution_to_dict(solution, **meta))


def load_solution(path) -> tuple[Solution, dict]:
    """Read a solution file; returns ``(solution, remaining metadata)``."""
    data = read_json(path)
    if data.get("format") != SOLUTION_FORMAT:
        raise ArtifactError(f"{path}: not a solution file")
    rep = data["report"]
    stationarity = rep.get("stationarity")
    sol = Solution(
        X=np.asarray(data["states"], dtype=float),
        U=np.asarray(data["controls"], dtype=float),
        K=np.asarray(data["gains"], dtype=float),
        k=np.asarray(data["feedforward"], dtype=float),
        dt=float(data["dt"]),
        objective=float(rep["objective"]),
        cost_history=list(rep["cost_history"]),
        outer_history=list(rep["outer_history"]),
        converged=bool(rep["converged"]),
        iterations=int(rep["iterations"]),
        stationarity=math.inf if stationarity is None else float(stationarity),
        torque_violation=float(rep["torque_violation"]),
        path_violation=float(rep["path_violation"]),
        message=rep.get("message", ""),
    )
    meta = {k: v for k, v in data.items() if k not in ("format", "states", "controls", "gains", "feedforward", "dt", "report")}
    return sol, meta


# -- trajectory logs ------------------------------------------------------------------

_STATE_COLUMNS = (
    "p_x p_y p_z quat_x quat_y quat_z quat_w tail_pitch tail_yaw tail_length "
    "v_x v_y v_z omega_x omega_y omega_z tail_pitch_rate tail_yaw_rate tail_length_rate"
).split()


def log_columns(log: TrajectoryLog) -> dict[str, np.ndarray]:
    """Flat named columns, one row per tick (angles in degrees where named ``_deg``)."""
    cols: dict[str, np.ndarray] = {"t": log.t, "phase": log.phase.astype(float)}
    for i, name in enumerate(_STATE_COLUMNS):
        cols[name] = log.states[:, i]
    eul = np.degrees(log.euler())
    cols["yaw_deg"], cols["pitch_deg"], cols["roll_deg"] = eul[:, 0], eul[:, 1], eul[:, 2]
    cols["tau_pitch"], cols["tau_yaw"], cols["force_length"] = log.torques.T
    cols["tail_length_cmd"] = log.tail_length_cmd
    cols["attitude_error"] = log.attitude_error
    cols["tracking_cost"] = log.tracking_cost
    for f in range(log.foot_forces.shape[1]):
        for a, axis in enumerate("xyz"):
            cols[f"foot{f}_f{axis}"] = log.foot_forces[:, f, a]
        cols[f"foot{f}_contact"] = log.foot_contact[:, f].astype(float)
        cols[f"leg{f}_length"] = log.leg_lengths[:, f]
    cols["body_penetration"] = log.body_penetration
    cols["foot_penetration"] = log.foot_penetration
    return cols


def _write_table(path, meta: dict, cols: dict[str, np.ndarray], float_format: str) -> Path:
    lines = [f"# {k}: {json.dumps(v, default=_jsonable)}" for k, v in meta.items()]
    names = list(cols)
    lines.append(",".join(names))
    table = np.column_stack([np.asarray(cols[n], dtype=float) for n in names]) if names else np.empty((0, 0))
    for row in table:
        lines.append(",".join("nan" if not math.isfinite(v) else float_format % v for v in row))
    return _atomic_write(path, "\n".join(lines) + "\n")


def write_log_csv(path, log: TrajectoryLog, config_hash: str, float_format: str = "%.9g") -> Path:
    meta = {
        "format": LOG_FORMAT,
        "config_hash": config_hash,
        "scenario": log.scenario,
        "dt": log.dt,
        "touchdown_time": log.touchdown_time,
        "retract_time": log.retract_time,
        "phase_transitions": log.phase_transitions(),
    }
    return _write_table(path, meta, log_columns(log), float_format)


def read_table(path) -> tuple[dict, dict[str, np.ndarray]]:
    """Inverse of the CSV writers: ``(metadata, columns)``."""
    meta: dict = {}
    try:
        with open(path, newline="") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ArtifactError(f"{path}: {exc}") from exc
    body = []
    for line in lines:
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition(": ")
            try:
                meta[key] = json.loads(value)
            except json.JSONDecodeError:
                meta[key] = value
        elif line:
            body.append(line)
    if not body:
        raise ArtifactError(f"{path}: no header row")
    rows = list(csv.reader(body))
    names = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(len(rows) - 1, len(names))
    return meta, {n: data[:, i] for i, n in enumerate(names)}


# -- summaries ----------------------------------------------------------------------


def drop_summary(log: TrajectoryLog, verdict, config, solution: Solution | None = None) -> dict:
    return {
        "format": "tailfall-summary/1",
        "config_hash": config.hash,
        "config": config.to_dict(),
        "scenario": log.scenario,
        "verdict": verdict.to_dict(),
        "timings": {
            "retract_time": log.retract_time,
            "touchdown_time": log.touchdown_time,
            "end_time": float(log.t[-1]) if log.n_ticks else None,
            "phase_transitions": log.phase_transitions(),
        },
        "aborted": log.aborted,
        "message": log.message,
        "plan": None
        if solution is None
        else {"converged": solution.converged, "iterations": solution.iterations, "objective": solution.objective},
    }


def write_batch_csv(path, summary, config_hash: str) -> Path:
    rows = [r.to_dict() for r in summary.rows]
    lines = ["# format: \"tailfall-batch/1\"", f"# config_hash: {json.dumps(config_hash)}"]
    names = list(rows[0]) if rows else []
    buf = [",".join(names)]
    for r in rows:
        buf.append(",".join("" if r[n] is None else str(r[n]) for n in names))
    return _atomic_write(path, "\n".join(lines + buf) + "\n")


# -- report series ----------------------------------------------------------------------

REPORT_COLUMNS = (
    "t",
    "phase",
    "yaw_deg",
    "pitch_deg",
    "roll_deg",
    "tail_length",
    "tail_length_cmd",
    "tau_pitch",
    "tau_yaw",
    "force_length",
)


def report_series(paths, force: bool = False) -> tuple[dict, dict[str, np.ndarray]]:
    """Merge logs into one time-aligned table of plot-ready columns.

    All logs start at release (t = 0); rows are the union of their tick
    times, with NaN where a run has already ended. Columns are prefixed with
    ``run<i>_`` when more than one log is given. Mixed config hashes are an
    error unless ``force``.
    """
    paths = list(paths)
    if not paths:
        raise ArtifactError("no logs given")
    loaded = [read_table(p) for p in paths]
    hashes = {m.get("config_hash") for m, _ in loaded}
    if len(hashes) > 1 and not force:
        raise ArtifactError(f"logs come from different configurations {sorted(map(str, hashes))}; pass force to merge")
    t_all = np.unique(np.concatenate([c["t"] for _, c in loaded]))
    out = {"t": t_all}
    markers = []
    for i, (meta, cols) in enumerate(loaded):
        prefix = f"run{i}_" if len(loaded) > 1 else ""
        idx = np.searchsorted(cols["t"], t_all)
        hit = (idx < cols["t"].size) & (cols["t"][np.minimum(idx, cols["t"].size - 1)] == t_all)
        for name in REPORT_COLUMNS[1:]:
            col = np.full(t_all.size, np.nan)
            col[hit] = cols[name][idx[hit]]
            out[prefix + name] = col
        for t_mark, phase in meta.get("phase_transitions", []):
            markers.append({"run": i, "t": t_mark, "phase": phase})
    meta = {
        "format": REPORT_FORMAT,
        "config_hash": sorted(map(str, hashes)) if len(hashes) > 1 else next(iter(hashes)),
        "sources": [str(p) for p in paths],
        "phase_markers": markers,
    }
    return meta, out


def write_report(path, paths, force: bool = False, float_format: str = "%.9g") -> Path:
    meta, cols = report_series(paths, force=force)
    return _write_table(path, meta, cols, float_format)
