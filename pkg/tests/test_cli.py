import json
import subprocess
import sys

import numpy as np
import pytest

from tailfall import io
from tailfall.cli import (
    EXIT_INPUT,
    EXIT_LANDING_FAILED,
    EXIT_OK,
    EXIT_PLAN_FAILED,
    EXIT_SIM_ABORTED,
    main,
)
from tailfall.config import ToolkitConfig
from tailfall.sim import _Plant


def _write(path, text):
    path.write_text(text)
    return str(path)


def test_exit_codes_are_distinct():
    codes = {EXIT_OK, EXIT_INPUT, EXIT_PLAN_FAILED, EXIT_SIM_ABORTED, EXIT_LANDING_FAILED}
    assert len(codes) == 5 and EXIT_OK == 0


def test_plan_level_start_is_trivial(tmp_path):
    out = tmp_path / "s.json"
    assert main(["plan", "--out", str(out)]) == EXIT_OK
    sol, meta = io.load_solution(out)
    assert np.abs(sol.U).max() < 1e-6
    assert meta["config_hash"] == ToolkitConfig().hash
    assert meta["scenario"]["euler_deg"] == [0.0, 0.0, 0.0]


def test_plan_without_usable_torque_fails(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "robot:\n  tail_torque_limits: [-0.01, 0.0]\n")
    assert main(["plan", "--config", cfg, "--pitch", "20", "--out", str(tmp_path / "s.json")]) == EXIT_PLAN_FAILED
    sol, _ = io.load_solution(tmp_path / "s.json")
    assert not sol.converged and "attitude unmet" in sol.message


def test_zero_width_torque_box_is_an_input_error(tmp_path, capsys):
    cfg = _write(tmp_path / "c.yaml", "robot:\n  tail_torque_limits: [0.0, 0.0]\n")
    assert main(["plan", "--config", cfg]) == EXIT_INPUT
    assert "tail_torque_limits" in capsys.readouterr().err


def test_bad_config_is_an_input_error(tmp_path):
    cfg = _write(tmp_path / "c.yaml", "solver:\n  speed: 11\n")
    assert main(["plan", "--config", cfg]) == EXIT_INPUT
    assert main(["plan", "--config", str(tmp_path / "missing.yaml")]) == EXIT_INPUT


def test_usage_errors_exit_2():
    with pytest.raises(SystemExit) as err:
        main(["fly"])
    assert err.value.code == 2
    with pytest.raises(SystemExit) as err:
        main(["batch", "--jobs", "0"])
    assert err.value.code == 2


@pytest.fixture(scope="module")
def planned(tmp_path_factory):
    d = tmp_path_factory.mktemp("plan")
    out = d / "s.json"
    assert main(["plan", "--pitch", "10", "--roll", "-8", "--out", str(out)]) == EXIT_OK
    return out


def test_drop_with_solution_writes_artifacts(planned, tmp_path):
    out = tmp_path / "drop"
    code = main(["drop", "--pitch", "10", "--roll", "-8", "--solution", str(planned), "--out", str(out)])
    assert code == EXIT_OK
    summary = json.loads((out / "summary.json").read_text())
    meta, cols = io.read_table(out / "log.csv")
    assert summary["config_hash"] == meta["config_hash"] == ToolkitConfig().hash
    assert summary["verdict"]["success"]
    assert cols["t"].size > 100


def test_drop_rejects_a_mismatched_solution(planned, tmp_path, capsys):
    code = main(["drop", "--pitch", "25", "--solution", str(planned), "--out", str(tmp_path)])
    assert code == EXIT_INPUT
    assert "--replan" in capsys.readouterr().err


def test_drop_replan_overrides_solution(planned, tmp_path):
    out = tmp_path / "d"
    assert main(["drop", "--pitch", "5", "--solution", str(planned), "--replan", "--out", str(out)]) == EXIT_OK
    assert (out / "solution.json").exists()


def test_drop_abort_exit_code(tmp_path, monkeypatch):
    def broken(self, x, L, tau, dt, stance):
        return np.full_like(x, np.nan), L

    monkeypatch.setattr(_Plant, "step", broken)
    out = tmp_path / "d"
    assert main(["drop", "--height", "0.8", "--out", str(out)]) == EXIT_SIM_ABORTED
    assert json.loads((out / "summary.json").read_text())["aborted"]


def test_batch_and_report(tmp_path):
    out = tmp_path / "b"
    assert main(["batch", "--values", "0", "--height", "1.2", "--out", str(out)]) == EXIT_OK
    data = json.loads((out / "batch.json").read_text())
    assert data["n_success"] == 1 and data["config_hash"] == ToolkitConfig().hash
    assert (out / "scenarios" / "000.json").exists()
    assert (out / "batch.csv").read_text().startswith("# format")

    d1, d2 = tmp_path / "d1", tmp_path / "d2"
    assert main(["drop", "--height", "0.8", "--out", str(d1)]) == EXIT_OK
    cfg = _write(tmp_path / "c.yaml", "contact:\n  friction: 0.6\n")
    assert main(["drop", "--height", "0.8", "--config", cfg, "--out", str(d2)]) == EXIT_OK
    rep = tmp_path / "r.csv"
    assert main(["report", str(d1 / "log.csv"), "--out", str(rep)]) == EXIT_OK
    meta, cols = io.read_table(rep)
    assert "phase_markers" in meta and "roll_deg" in cols
    mixed = ["report", str(d1 / "log.csv"), str(d2 / "log.csv"), "--out", str(rep)]
    assert main(mixed) == EXIT_INPUT
    assert main(mixed + ["--force"]) == EXIT_OK


def test_batch_reports_landing_failures(tmp_path, capsys):
    # an extended tail strikes the ground from a level 1 m drop
    out = tmp_path / "b"
    code = main(["batch", "--values", "0", "--height", "1.0", "--no-retract", "--out", str(out)])
    assert code == EXIT_LANDING_FAILED
    assert "body contact" in capsys.readouterr().out
    assert main(["batch", "--values", "0", "--height", "1.0", "--no-retract", "--min-success", "0", "--out", str(out)]) == EXIT_OK


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "tailfall", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    assert "plan" in out.stdout and "report" in out.stdout
