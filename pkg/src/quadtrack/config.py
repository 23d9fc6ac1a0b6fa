"""INI configuration for runs: vehicle, controller, training, wind, reference.

Every key has a default; unknown sections or keys raise errors that name the
offender so typos fail loudly instead of being silently ignored.
"""
from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .dynamics import PhysicalParams


@dataclass
class RunSection:
    seed: int = 0
    out_dir: str = "runs"


@dataclass
class VehicleSection:
    mass: float = 1.0
    arm_length: float = 0.17
    torque_coeff: float = 0.016
    thrust_max: float = 8.0
    inertia_x: float = 0.01
    inertia_y: float = 0.01
    inertia_z: float = 0.02

    def params(self) -> PhysicalParams:
        return PhysicalParams(
            mass=self.mass,
            inertia_diag=np.array([self.inertia_x, self.inertia_y, self.inertia_z]),
            arm_length=self.arm_length,
            torque_coeff=self.torque_coeff,
            thrust_max=self.thrust_max,
        )


@dataclass
class ControllerSection:
    horizon: int = 8
    dt: float = 0.05
    residual_std: float = 0.25
    w_box: float = 0.0


@dataclass
class TrainingSection:
    episodes: int = 250
    batch_size: int = 64
    hidden: int = 64
    gamma: float = 0.998
    learning_rate: float = 1e-3
    n_quantiles: int = 32
    noise_std: float = 0.3
    beta: float = 0.1
    warmup: int = 500
    multi_option: bool = True
    # moving-average critic-loss threshold for early stopping; 0 disables it
    # (the right scale depends on the task's reward magnitudes, so the
    # default is a fixed episode budget)
    early_stop_loss: float = 0.0


@dataclass
class WindSection:
    force_x: float = 2.0
    force_y: float = -1.5
    force_z: float = 0.5
    residual_frac: float = 0.25
    noise_std: float = 0.25
    residual_bound: float = 3.0
    measurement_std: float = 0.05


@dataclass
class ReferenceSection:
    name: str = "hover"
    duration: float = 10.0
    radius: float = 1.5
    period: float = 6.0
    scale: float = 1.5
    line_length: float = 3.0


@dataclass
class AppConfig:
    run: RunSection = field(default_factory=RunSection)
    vehicle: VehicleSection = field(default_factory=VehicleSection)
    controller: ControllerSection = field(default_factory=ControllerSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    wind: WindSection = field(default_factory=WindSection)
    reference: ReferenceSection = field(default_factory=ReferenceSection)

    def as_dict(self) -> dict:
        return {name: asdict(getattr(self, name)) for name in _SECTIONS}


_SECTIONS = ("run", "vehicle", "controller", "training", "wind", "reference")


def _coerce(section_name: str, key: str, raw: str, target_type: type):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("1", "true", "yes", "on"):
                return True
            if lowered in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        return target_type(raw)
    except ValueError as exc:
        raise ValueError(
            f"config [{section_name}] {key} = {raw!r} is not a valid {target_type.__name__}"
        ) from exc


def load_config(path=None) -> AppConfig:
    """Parse an INI file into an AppConfig; ``None`` returns pure defaults."""
    config = AppConfig()
    if path is None:
        return config
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path)
    for section_name in parser.sections():
        if section_name not in _SECTIONS:
            raise ValueError(
                f"unknown config section [{section_name}]; expected one of {_SECTIONS}"
            )
        target = getattr(config, section_name)
        known = {f.name: f.type for f in fields(target)}
        types = {f.name: type(getattr(target, f.name)) for f in fields(target)}
        for key, raw in parser.items(section_name):
            if key not in known:
                raise ValueError(
                    f"unknown key '{key}' in [{section_name}];"
                    f" expected one of {sorted(known)}"
                )
            setattr(target, key, _coerce(section_name, key, raw, types[key]))
    return config


def dump_config(config: AppConfig) -> str:
    """Render a config in INI form (the same shape ``load_config`` reads)."""
    lines = []
    for section_name in _SECTIONS:
        lines.append(f"[{section_name}]")
        for key, value in asdict(getattr(config, section_name)).items():
            lines.append(f"{key} = {value}")
        lines.append("")
    return "\n".join(lines)
