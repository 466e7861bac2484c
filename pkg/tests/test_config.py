import math
from importlib import resources

import pytest
import yaml

from tailfall.config import ConfigError, ToolkitConfig
from tailfall.model import RobotParams


def test_defaults_are_the_tailed_a1():
    cfg = ToolkitConfig()
    assert cfg.robot == RobotParams()
    assert cfg.preset == "tailed_a1"


def test_empty_file_is_valid(tmp_path):
    p = tmp_path / "empty.yaml"
    p.write_text("")
    assert ToolkitConfig.load(p) == ToolkitConfig()


def test_round_trip_is_identical(tmp_path):
    cfg = ToolkitConfig.from_dict(
        {
            "robot": {"preset": "test_platform", "tail_pitch_limit_deg": 80.0, "tail_torque_limits": [-4, 4]},
            "solver": {"max_iterations": 150},
            "phase": {"retraction_margin": 0.0, "desired_quat": [0, 0, 0, 1]},
            "contact": {"friction": 0.6},
            "output": {"directory": "runs"},
        }
    )
    path = tmp_path / "cfg.yaml"
    cfg.save(path)
    again = ToolkitConfig.load(path)
    assert again == cfg
    assert again.hash == cfg.hash
    assert again.dump() == cfg.dump()


def test_angles_are_degrees_in_the_file():
    cfg = ToolkitConfig.from_dict({"robot": {"tail_workspace_half_angle_deg": 80.0}})
    assert cfg.robot.tail_workspace_half_angle == pytest.approx(math.radians(80.0))
    assert cfg.to_dict()["robot"]["tail_workspace_half_angle_deg"] == pytest.approx(80.0)


def test_hash_tracks_content():
    a = ToolkitConfig()
    b = a.override("contact", friction=0.5)
    assert a.hash != b.hash
    assert len(a.hash) == 12
    assert ToolkitConfig().hash == a.hash


@pytest.mark.parametrize(
    "data, match",
    [
        ({"robots": {}}, "unknown"),
        ({"robot": {"wingspan": 1}}, "unknown"),
        ({"robot": {"preset": "cheetah"}}, "preset"),
        ({"robot": {"body_mass": -1}}, "body_mass"),
        ({"solver": {"max_iterations": 0}}, "max_iterations"),
        ({"phase": {"nope": 1}}, "unknown"),
        ({"contact": {"friction": 0}}, "friction"),
        ({"output": {"float_format": "x"}}, "float_format"),
        ({"robot": [1, 2]}, "mapping"),
    ],
)
def test_invalid_configs_are_rejected(data, match):
    with pytest.raises(ConfigError, match=match):
        ToolkitConfig.from_dict(data)


def test_malformed_yaml(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("robot: [unclosed\n")
    with pytest.raises(ConfigError):
        ToolkitConfig.load(p)


def test_override_rejects_unknown_section():
    with pytest.raises(ConfigError):
        ToolkitConfig().override("legs", stiffness=1.0)


@pytest.mark.parametrize("name", ["tailed_a1.yaml", "test_platform.yaml"])
def test_shipped_presets_load(name):
    text = resources.files("tailfall").joinpath("presets", name).read_text()
    cfg = ToolkitConfig.from_dict(yaml.safe_load(text))
    if name == "tailed_a1.yaml":
        assert cfg == ToolkitConfig()
    else:
        assert cfg.robot == RobotParams.test_platform()
