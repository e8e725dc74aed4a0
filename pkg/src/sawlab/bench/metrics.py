"""Command-following and efficiency metrics computed from episode logs.

All three work on any :class:`EpisodeLog`, whether it came from the
simulator, a synthetic generator, or an imported hardware recording.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sawlab.core import EpisodeLog
from sawlab.errors import InvalidArgument, ProtocolError, SchemaError

DEFAULT_CIRCLE_RADIUS = 0.3048     # 2 ft diameter circle
MIN_ENERGY_DISTANCE = 0.1


@dataclass(frozen=True)
class RotationResult:
    commanded: float        # theta_c (rad)
    rotation: float         # achieved yaw change (rad, unwrapped)
    angular_error: float
    lateral_drift: float


@dataclass(frozen=True)
class VelocityResult:
    d_c: float
    d_r: float
    mean_velocity: float


@dataclass(frozen=True)
class EnergyResult:
    positive_work: float
    distance: float
    energy_per_meter: float | None   # None when the distance is too short to normalize


def _obs_series(log: EpisodeLog):
    if not log.records:
        raise SchemaError("episode log has no records")
    return [log.start_obs()] + [r.obs for r in log.records]


def _world_feet(obs, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    fp = obs.foot_pos[:, :2]
    rot = np.array([[c, -s], [s, c]])
    return obs.base_pos[:2] + fp @ rot.T


def rotation_metrics(log: EpisodeLog, omega: float, duration: float,
                     circle_radius: float = DEFAULT_CIRCLE_RADIUS) -> RotationResult:
    """Angular error against ``omega * duration`` and lateral drift of the
    feet beyond a circle centred on the starting base position.

    Foot positions are stored relative to the base in the torso heading
    frame, so they are rotated by the torso yaw before measuring.
    """
    if not circle_radius > 0:
        raise InvalidArgument("circle_radius must be positive")
    log.require("torso_orientation", "foot_pos", "base_pos")
    obs = _obs_series(log)
    yaw = np.unwrap([o.torso_orientation.yaw() for o in obs])
    rotation = float(yaw[-1] - yaw[0])
    theta_c = omega * duration
    center = obs[0].base_pos[:2]
    drift = 0.0
    for o, y in zip(obs, yaw):
        d = np.linalg.norm(_world_feet(o, y) - center, axis=1).max()
        drift = max(drift, d - circle_radius)
    return RotationResult(theta_c, rotation, abs(theta_c - rotation), max(0.0, float(drift)))


def velocity_metric(log: EpisodeLog, v: float, duration: float) -> VelocityResult:
    """Straight-line base displacement from the clock start (the log's initial
    observation) to the final record, which should be the full stop."""
    if not duration > 0:
        raise InvalidArgument("duration must be positive")
    log.require("base_pos")
    if log.duration + 1e-9 < duration:
        raise ProtocolError(f"log covers {log.duration:.3f} s, shorter than the {duration} s window")
    obs = _obs_series(log)
    d_r = float(np.linalg.norm(obs[-1].base_pos[:2] - obs[0].base_pos[:2]))
    return VelocityResult(v * duration, d_r, d_r / duration)


def positive_work(log: EpisodeLog) -> float:
    """Sum over steps and motors of max(0, tau * omega) * dt."""
    log.require("applied_torque", "motor_vel")
    if not log.records:
        raise SchemaError("episode log has no records")
    tau = log.channel("applied_torque")
    w = log.channel("motor_vel")
    if tau.shape != w.shape:
        raise SchemaError("torque and motor velocity channels differ in shape")
    return float(np.maximum(tau * w, 0.0).sum() * log.dt)


def energy_metric(log: EpisodeLog, min_distance: float = MIN_ENERGY_DISTANCE) -> EnergyResult:
    """Positive motor work and its value per metre of base travel. Logs that
    barely move (standing) keep W+ but get no per-metre value."""
    log.require("base_pos")
    work = positive_work(log)
    obs = _obs_series(log)
    dist = float(np.linalg.norm(obs[-1].base_pos[:2] - obs[0].base_pos[:2]))
    return EnergyResult(work, dist, work / dist if dist >= min_distance else None)
