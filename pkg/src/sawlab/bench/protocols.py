"""Live trial protocols: scripted command/push schedules recorded as EpisodeLogs.

Every live measurement is first recorded, then scored by the same metric
functions that score synthetic or imported logs.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from sawlab.bench.metrics import (
    DEFAULT_CIRCLE_RADIUS,
    EnergyResult,
    RotationResult,
    VelocityResult,
    energy_metric,
    rotation_metrics,
    velocity_metric,
)
from sawlab.core import Command, EpisodeLog, EpisodeRecord
from sawlab.errors import InvalidArgument, ProtocolError, SimulationBlowup

SETTLE_TIME = 2.0
STOP_TIME = 3.0


@dataclass
class Phase:
    """Hold ``command`` for ``duration`` seconds; optionally push at its start."""

    duration: float
    command: Command = field(default_factory=Command)
    push: tuple | None = None       # (force, duration[, lateral])
    mark: str | None = None         # label recorded as the phase start time in meta


def _ensure_length(env, total: float) -> None:
    cfg = env.cfg
    if dataclasses.is_dataclass(cfg) and cfg.episode_length < total:
        env.cfg = dataclasses.replace(cfg, episode_length=total)


def record_episode(env, controller, seed: int, phases: list[Phase], meta: dict | None = None,
                   stop_on_fall: bool = True) -> EpisodeLog:
    """Reset ``env`` with ``seed`` and run the phase schedule under ``controller``.

    Random pushes are disabled. A :class:`SimulationBlowup` ends the episode
    with ``meta["blowup"]`` set and the last record flagged as fallen.
    """
    total = sum(p.duration for p in phases)
    _ensure_length(env, total + 1.0)
    env.push_enabled = False
    env.set_command(phases[0].command, hold=True)
    obs = env.reset(seed)
    controller.reset()
    dt = env.control_dt
    info = dict(meta or {}, seed=int(seed), blowup=False, marks={})
    log = EpisodeLog(dt=dt, initial=obs, config_hash=env.config_hash(), meta=info)
    if hasattr(env, "model"):
        log.model_hash = env.model.hash()
    done = False
    for phase in phases:
        if done:
            break
        env.set_command(phase.command, hold=True)
        if phase.mark:
            info["marks"][phase.mark] = float(obs.time)
        pushed = None
        if phase.push is not None:
            f, d, *lat = phase.push
            pushed = env.apply_push(f, d, lateral=True) if lat and lat[0] else env.apply_push(f, d)
        n = int(round(phase.duration / dt))
        for _ in range(n):
            cmd = env.command
            a = controller.act(env.features(obs), cmd, obs)
            try:
                obs, breakdown, done = env.step(a)
            except SimulationBlowup as exc:
                info["blowup"] = True
                info["blowup_step"] = exc.step
                if log.records:
                    log.records[-1].fallen = True
                    log.records[-1].terminal = True
                done = True
                break
            fallen = bool(env.fallen)
            log.append(EpisodeRecord(obs=obs, cmd=cmd, reward=breakdown,
                                     push=pushed.to_dict() if pushed is not None else None,
                                     push_active=bool(env.push_active) or pushed is not None,
                                     fallen=fallen, terminal=False))
            pushed = None
            if fallen and stop_on_fall:
                done = True
            if done:
                break
    if log.records:
        log.records[-1].terminal = True
    return log


def _clock_window(log: EpisodeLog, mark: str) -> EpisodeLog:
    t0 = log.meta["marks"][mark]
    return log.window(t0)


@dataclass(frozen=True)
class RotationTrial:
    omega: float
    duration: float
    result: RotationResult
    log: EpisodeLog


def rotation_trial(env, controller, omega: float, duration: float, seed: int,
                   circle_radius: float = DEFAULT_CIRCLE_RADIUS,
                   settle: float = SETTLE_TIME) -> RotationTrial:
    """Settle standing, turn in place at ``omega`` for ``duration``, then
    score the commanded window."""
    if not getattr(env, "supports_yaw", True):
        raise ProtocolError("environment has no yaw freedom; score recorded rotation logs instead")
    log = record_episode(env, controller, seed, [
        Phase(settle),
        Phase(duration, Command(c_yaw=omega), mark="clock"),
    ], meta={"protocol": "rotation", "omega": omega, "duration": duration})
    res = rotation_metrics(_clock_window(log, "clock"), omega, duration, circle_radius)
    return RotationTrial(omega, duration, res, log)


@dataclass(frozen=True)
class VelocityTrial:
    v: float
    duration: float
    velocity: VelocityResult
    energy: EnergyResult
    log: EpisodeLog


def velocity_trial(env, controller, v: float, duration: float, seed: int,
                   settle: float = SETTLE_TIME, stop: float = STOP_TIME) -> VelocityTrial:
    """Start the clock standing, command ``v`` for ``duration``, then command
    standing until a full stop. Displacement and positive work are measured
    from the clock start to the end of the stop phase."""
    if not duration > 0:
        raise InvalidArgument("duration must be positive")
    log = record_episode(env, controller, seed, [
        Phase(settle),
        Phase(duration, Command(c_x=v), mark="clock"),
        Phase(stop),
    ], meta={"protocol": "velocity", "v": v, "duration": duration})
    win = _clock_window(log, "clock")
    return VelocityTrial(v, duration, velocity_metric(win, v, duration), energy_metric(win), log)


def summarize(values) -> tuple[float, float]:
    """Mean and population standard deviation."""
    a = np.asarray(list(values), dtype=float)
    if a.size == 0:
        return float("nan"), float("nan")
    return float(a.mean()), float(a.std())
