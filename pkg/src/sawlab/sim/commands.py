"""Episodic command protocol and random pushes."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from sawlab.core import Command
from sawlab.errors import InvalidArgument
from sawlab.sim.config import CommandConfig, PushConfig


@dataclass(frozen=True)
class Push:
    """Constant horizontal force on the torso over ``[start_time, start_time + duration)``."""

    force: float
    duration: float
    start_time: float
    height: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidArgument("push duration must be positive")

    @property
    def impulse(self) -> float:
        return self.force * self.duration

    def active(self, t: float) -> bool:
        return self.start_time <= t < self.start_time + self.duration

    def to_dict(self) -> dict:
        return asdict(self)


def sample_command(rng: np.random.Generator, cfg: CommandConfig,
                   heading_ref: float = 0.0) -> tuple[Command, int]:
    """Pick a category uniformly, sample its active components uniformly, and
    draw the length (control steps) of the window the command is held for."""
    cats = cfg.categories
    cat = cats[int(rng.integers(len(cats)))]
    cx = cy = cyaw = 0.0
    if cat in ("sagittal", "omni"):
        cx = rng.uniform(*cfg.c_x_range)
    if cat in ("lateral", "omni"):
        cy = rng.uniform(*cfg.c_y_range)
    if cat in ("rotate", "omni"):
        cyaw = rng.uniform(*cfg.c_yaw_range)
    window = int(rng.integers(cfg.window_steps[0], cfg.window_steps[1] + 1))
    return Command(cx, cy, cyaw, heading_ref), window


def maybe_push(rng: np.random.Generator, cfg: PushConfig, t: float,
               height: float = 0.0) -> Push | None:
    """Bernoulli(probability) draw for one control step; magnitude and duration
    uniform in the configured ranges, direction a fair coin."""
    if cfg.probability <= 0.0 or rng.random() >= cfg.probability:
        return None
    mag = rng.uniform(*cfg.force_range)
    sign = 1.0 if rng.random() < 0.5 else -1.0
    lo, hi = cfg.duration_range
    duration = lo if lo == hi else rng.uniform(lo, hi)
    return Push(sign * mag, duration, t, height)
