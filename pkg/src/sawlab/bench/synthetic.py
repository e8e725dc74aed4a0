"""Synthetic EpisodeLogs with hand-computable metric values.

Used as oracles for the metric code and as stand-ins for hardware recordings
when the live model cannot produce a behaviour (e.g. yaw on the planar biped).
"""

from __future__ import annotations

import math

import numpy as np

from sawlab.core import Command, EpisodeLog, EpisodeRecord, Observation, UnitQuaternion

_N_MOTORS = 1


def _obs(t, base, yaw=0.0, feet=None, tau=None, omega=None, n=_N_MOTORS):
    tau = np.zeros(n) if tau is None else np.asarray(tau, float)
    omega = np.zeros(n) if omega is None else np.asarray(omega, float)
    feet = np.zeros((2, 3)) if feet is None else feet
    return Observation(motor_pos=np.zeros(len(tau)), motor_vel=omega,
                       torso_orientation=UnitQuaternion.from_yaw(yaw),
                       base_pos=np.asarray(base, float), foot_pos=feet,
                       applied_torque=tau, time=t)


def _log(dt, observations, cmds, meta) -> EpisodeLog:
    log = EpisodeLog(dt=dt, initial=observations[0], meta=dict(meta, synthetic=True))
    for k, (o, c) in enumerate(zip(observations[1:], cmds)):
        log.append(EpisodeRecord(obs=o, cmd=c, terminal=k == len(cmds) - 1))
    return log


def _steps(duration: float, dt: float) -> int:
    n = int(round(duration / dt))
    if n < 1 or abs(n * dt - duration) > 1e-9:
        raise ValueError("duration must be a positive multiple of dt")
    return n


def rotation_log(omega: float, duration: float, dt: float = 0.02, final_rotation=None,
                 foot_radius: float = 0.2, stance_width=None, center=(0.0, 0.0)) -> EpisodeLog:
    """Turn in place at a constant rate so that the yaw change over the log is
    ``final_rotation`` (default ``omega * duration``).

    Feet sit at ``±foot_radius`` laterally from the base in the heading
    frame, so in the world they trace a circle of that radius.
    """
    n = _steps(duration, dt)
    total = omega * duration if final_rotation is None else float(final_rotation)
    w = foot_radius if stance_width is None else stance_width
    feet = np.array([[0.0, w, -0.8], [0.0, -w, -0.8]])
    base = [center[0], center[1], 0.8]
    obs = [_obs(k * dt, base, total * k / n, feet) for k in range(n + 1)]
    cmds = [Command(c_yaw=omega)] * n
    return _log(dt, obs, cmds, {"protocol": "rotation", "omega": omega, "duration": duration})


def foot_excursion_log(peak: float, dt: float = 0.02, duration: float = 1.0) -> EpisodeLog:
    """Standing log in which the left foot moves straight out to ``peak``
    metres from the base and back (hand-checkable drift)."""
    n = _steps(duration, dt)
    obs = []
    for k in range(n + 1):
        r = peak * math.sin(math.pi * k / n)     # exactly ``peak`` at k = n/2 for even n
        feet = np.array([[r, 0.0, -0.8], [0.0, -0.1, -0.8]])
        obs.append(_obs(k * dt, [0.0, 0.0, 0.8], 0.0, feet))
    return _log(dt, obs, [Command()] * n, {"protocol": "rotation"})


def straight_walk_log(v: float, duration: float, dt: float = 0.02, distance=None,
                      stop_time: float = 0.0) -> EpisodeLog:
    """Base moving along +x at a constant speed, covering ``distance``
    (default ``v * duration``) by the end of the command window; an optional
    stationary tail of ``stop_time`` seconds follows."""
    n = _steps(duration, dt)
    m = int(round(stop_time / dt))
    d = v * duration if distance is None else float(distance)
    obs = [_obs(k * dt, [d * min(k, n) / n, 0.0, 0.8]) for k in range(n + m + 1)]
    cmds = [Command(c_x=v)] * n + [Command()] * m
    return _log(dt, obs, cmds, {"protocol": "velocity", "v": v, "duration": duration})


def power_log(torques, velocities, dt: float, distance: float = 0.0) -> EpisodeLog:
    """Log with per-step motor torques and velocities, shaped (T, N), over a
    straight base path of ``distance`` metres."""
    tau = np.atleast_2d(np.asarray(torques, float))
    om = np.atleast_2d(np.asarray(velocities, float))
    if tau.shape != om.shape:
        raise ValueError("torques and velocities must have the same shape")
    T, n = tau.shape
    obs = [_obs(0.0, [0.0, 0.0, 0.8], n=n)]
    obs += [_obs((k + 1) * dt, [distance * (k + 1) / T, 0.0, 0.8], tau=tau[k], omega=om[k], n=n)
            for k in range(T)]
    return _log(dt, obs, [Command()] * T, {"protocol": "energy"})
