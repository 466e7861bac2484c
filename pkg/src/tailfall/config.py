"""Toolkit configuration: one YAML file with robot, solver, phase, contact and
output blocks.

Angles are written in degrees in the file (keys ending in ``_deg``) and held
in radians everywhere else. Unknown keys are rejected at every level, and
missing keys take the library defaults, so an empty file is a valid config.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .control import PhaseConfig
from .model import RobotParams
from .sim import ContactModel
from .trajopt import SolverSettings

PRESETS = {
    "tailed_a1": RobotParams,
    "test_platform": RobotParams.test_platform,
}

# robot fields that are angles (radians inside, degrees in the file)
_ROBOT_ANGLES = ("tail_workspace_half_angle", "tail_pitch_limit")


class ConfigError(ValueError):
    """Malformed or invalid configuration."""


def _check_keys(data, allowed, where: str) -> dict:
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping, got {type(data).__name__}")
    unknown = set(data) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {sorted(unknown)}")
    return dict(data)


def _field_names(cls) -> list[str]:
    return [f.name for f in dataclasses.fields(cls)]


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    write_log: bool = True
    float_format: str = "%.9g"

    def __post_init__(self):
        if not self.directory:
            raise ConfigError("output.directory must be non-empty")
        try:
            self.float_format % 1.0
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"output.float_format is not a printf format: {self.float_format!r}") from exc


@dataclass(frozen=True)
class ToolkitConfig:
    preset: str = "tailed_a1"
    robot: RobotParams = field(default_factory=RobotParams)
    solver: SolverSettings = field(default_factory=SolverSettings)
    phase: PhaseConfig = field(default_factory=PhaseConfig)
    contact: ContactModel = field(default_factory=ContactModel)
    output: OutputConfig = field(default_factory=OutputConfig)

    # -- dict / file round trip -------------------------------------------------

    @classmethod
    def from_dict(cls, data: dict | None) -> ToolkitConfig:
        data = _check_keys(data, ("robot", "solver", "phase", "contact", "output"), "config")
        try:
            robot_block = _check_keys(data.get("robot"), _robot_file_keys(), "robot")
            preset = robot_block.pop("preset", "tailed_a1")
            if preset not in PRESETS:
                raise ConfigError(f"robot.preset must be one of {sorted(PRESETS)}, got {preset!r}")
            for name in _ROBOT_ANGLES:
                if name + "_deg" in robot_block:
                    robot_block[name] = math.radians(float(robot_block.pop(name + "_deg")))
            robot = dataclasses.replace(PRESETS[preset](), **_tupled(robot_block))

            solver = SolverSettings(**_check_keys(data.get("solver"), _field_names(SolverSettings), "solver"))

            phase_block = _check_keys(data.get("phase"), _field_names(PhaseConfig), "phase")
            phase = PhaseConfig.from_dict(phase_block)

            contact = ContactModel(**_check_keys(data.get("contact"), _field_names(ContactModel), "contact"))
            output = OutputConfig(**_check_keys(data.get("output"), _field_names(OutputConfig), "output"))
        except ConfigError:
            raise
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
        return cls(preset=preset, robot=robot, solver=solver, phase=phase, contact=contact, output=output)

    def to_dict(self) -> dict:
        robot = {"preset": self.preset}
        for k, v in self.robot.to_dict().items():
            if k in _ROBOT_ANGLES:
                robot[k + "_deg"] = math.degrees(v)
            else:
                robot[k] = v
        out = {
            "robot": robot,
            "solver": self.solver.to_dict(),
            "phase": self.phase.to_dict(),
            "contact": self.contact.to_dict(),
            "output": dataclasses.asdict(self.output),
        }
        # plain python scalars only (numpy floats do not serialize)
        return json.loads(json.dumps(out, default=float))

    @classmethod
    def load(cls, path) -> ToolkitConfig:
        text = Path(path).read_text()
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(data)

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.dump())

    @property
    def hash(self) -> str:
        """Short content hash of the effective configuration."""
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    def override(self, section: str, **changes) -> ToolkitConfig:
        """Copy with fields of one block replaced (used for CLI flags)."""
        if section not in ("robot", "solver", "phase", "contact", "output"):
            raise ConfigError(f"unknown config section {section!r}")
        block = dataclasses.replace(copy.copy(getattr(self, section)), **changes)
        return dataclasses.replace(self, **{section: block})


def _robot_file_keys() -> list[str]:
    keys = ["preset"]
    for name in _field_names(RobotParams):
        keys.append(name + "_deg" if name in _ROBOT_ANGLES else name)
    return keys


def _tupled(block: dict) -> dict:
    out = {}
    for k, v in block.items():
        if isinstance(v, list):
            v = tuple(tuple(e) if isinstance(e, list) else e for e in v)
        out[k] = v
    return out
