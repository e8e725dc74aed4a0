"""Simulation, push, command, and domain-randomization settings."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from sawlab.errors import InvalidArgument

CATEGORIES = ("standing", "sagittal", "lateral", "rotate", "omni")


def _range(r, name, allow_degenerate=False):
    lo, hi = float(r[0]), float(r[1])
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise InvalidArgument(f"{name} must be finite")
    if hi < lo or (hi == lo and not allow_degenerate):
        raise InvalidArgument(f"{name} must satisfy lo < hi, got {r}")
    return [lo, hi]


@dataclass
class ContactConfig:
    stiffness: float = 5.0e4          # N/m per contact point
    damping: float = 400.0            # N s/m; explicit-stability bound on the foot pitch mode
    tangential_stiffness: float = 5.0e4
    tangential_damping: float = 500.0
    friction: float = 1.0

    def __post_init__(self):
        for k in ("stiffness", "damping", "tangential_stiffness", "friction"):
            if not getattr(self, k) > 0:
                raise InvalidArgument(f"contact.{k} must be positive")
        if self.tangential_damping < 0:
            raise InvalidArgument("contact.tangential_damping must be non-negative")


@dataclass
class PushConfig:
    probability: float = 0.01
    force_range: list = field(default_factory=lambda: [200.0, 800.0])
    duration_range: list = field(default_factory=lambda: [0.02, 0.02])

    def __post_init__(self):
        if not 0.0 <= self.probability <= 1.0:
            raise InvalidArgument("push.probability must lie in [0, 1]")
        self.force_range = _range(self.force_range, "push.force_range", allow_degenerate=True)
        self.duration_range = _range(self.duration_range, "push.duration_range",
                                     allow_degenerate=True)
        if self.force_range[0] < 0 or self.duration_range[0] <= 0:
            raise InvalidArgument("push magnitudes must be >= 0 and durations > 0")


@dataclass
class CommandConfig:
    categories: list = field(default_factory=lambda: ["standing", "sagittal"])
    c_x_range: list = field(default_factory=lambda: [-0.5, 2.0])
    c_y_range: list = field(default_factory=lambda: [-0.5, 0.5])
    c_yaw_range: list = field(default_factory=lambda: [-0.5, 0.5])
    window_steps: list = field(default_factory=lambda: [100, 300])

    def __post_init__(self):
        if not self.categories:
            raise InvalidArgument("command.categories must be non-empty")
        bad = [c for c in self.categories if c not in CATEGORIES]
        if bad:
            raise InvalidArgument(f"unknown command categories {bad}")
        self.c_x_range = _range(self.c_x_range, "command.c_x_range")
        self.c_y_range = _range(self.c_y_range, "command.c_y_range")
        self.c_yaw_range = _range(self.c_yaw_range, "command.c_yaw_range")
        lo, hi = int(self.window_steps[0]), int(self.window_steps[1])
        if not 1 <= lo <= hi:
            raise InvalidArgument("command.window_steps must satisfy 1 <= lo <= hi")
        self.window_steps = [lo, hi]


@dataclass
class SimConfig:
    physics_dt: float = 1.0 / 2000.0
    control_decimation: int = 40
    gravity: float = 9.81
    contact: ContactConfig = field(default_factory=ContactConfig)
    fall_height_fraction: float = 0.6
    fall_pitch: float = 1.0
    episode_length: float = 16.0
    command: CommandConfig = field(default_factory=CommandConfig)
    push: PushConfig = field(default_factory=PushConfig)
    init_noise: float = 0.02          # uniform joint perturbation half-width at reset (rad)
    blowup_limit: float = 1.0e3

    def __post_init__(self):
        if isinstance(self.contact, dict):
            self.contact = ContactConfig(**self.contact)
        if isinstance(self.command, dict):
            self.command = CommandConfig(**self.command)
        if isinstance(self.push, dict):
            self.push = PushConfig(**self.push)
        if not self.physics_dt > 0 or int(self.control_decimation) < 1:
            raise InvalidArgument("physics_dt and control_decimation must be positive")
        self.control_decimation = int(self.control_decimation)
        if not 0 < self.fall_height_fraction < 1 or not self.fall_pitch > 0:
            raise InvalidArgument("fall thresholds out of range")
        if not self.episode_length > 0 or self.init_noise < 0:
            raise InvalidArgument("episode_length must be positive, init_noise >= 0")

    @property
    def control_dt(self) -> float:
        return self.physics_dt * self.control_decimation

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.control_dt))


@dataclass
class DomainRandomization:
    enabled: bool = True
    mass_scale: list = field(default_factory=lambda: [0.9, 1.1])
    friction_scale: list = field(default_factory=lambda: [0.6, 1.2])
    gain_scale: list = field(default_factory=lambda: [0.9, 1.1])
    obs_noise: dict = field(default_factory=lambda: {"motor_pos": 0.005, "motor_vel": 0.05,
                                                     "orientation": 0.005})
    max_action_delay: int = 1

    def __post_init__(self):
        for name in ("mass_scale", "friction_scale", "gain_scale"):
            r = _range(getattr(self, name), name, allow_degenerate=True)
            if not r[0] <= 1.0 <= r[1]:
                raise InvalidArgument(f"domain_randomization.{name} must contain 1.0")
            if r[0] <= 0:
                raise InvalidArgument(f"domain_randomization.{name} must be positive")
            setattr(self, name, r)
        unknown = set(self.obs_noise) - {"motor_pos", "motor_vel", "orientation"}
        if unknown:
            raise InvalidArgument(f"unknown obs_noise channels {sorted(unknown)}")
        if any(not (math.isfinite(v) and v >= 0) for v in self.obs_noise.values()):
            raise InvalidArgument("obs_noise std must be finite and >= 0")
        if self.max_action_delay not in (0, 1):
            raise InvalidArgument("max_action_delay must be 0 or 1")

    @classmethod
    def off(cls) -> DomainRandomization:
        return cls(enabled=False, mass_scale=[1.0, 1.0], friction_scale=[1.0, 1.0],
                   gain_scale=[1.0, 1.0], obs_noise={}, max_action_delay=0)
