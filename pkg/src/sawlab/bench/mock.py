"""Scripted environment and controllers for checking trial protocols.

The mock environment has one actuator. A controller output above 0.5 after a
push has started makes the robot fall on the next step, which lets a
controller script exactly which trials succeed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from sawlab.core import Command, Observation
from sawlab.errors import ProtocolError, SimulationBlowup
from sawlab.sim.commands import Push


@dataclass
class _MockSim:
    episode_length: float = 1.0e6
    control_dt: float = 0.02

    @property
    def max_steps(self) -> int:
        return int(round(self.episode_length / self.control_dt))


class MockEnv:
    """Minimal stand-in for :class:`SawEnv` with the same protocol surface."""

    n_act = 1
    directions = ("+x", "-x", "+y", "-y")

    def __init__(self, seed: int = 0, control_dt: float = 0.02):
        self.cfg = _MockSim(control_dt=control_dt)
        self.control_dt = control_dt
        self.seed = seed
        self.command = Command()
        self.fixed_command = None
        self.push_enabled = True
        self.done = True
        self.fallen = False
        self.blowup_after_push = False

    def set_command(self, cmd: Command, hold: bool = True) -> None:
        self.command = cmd

    def config_hash(self) -> str:
        return "mock"

    def _obs(self) -> Observation:
        return Observation(motor_pos=np.zeros(1), motor_vel=np.zeros(1), base_pos=np.array([self.x, 0.0, 0.8]),
                           time=self.time)

    def reset(self, seed=None) -> Observation:
        self.seed = self.seed if seed is None else seed
        self.time = 0.0
        self.steps = 0
        self.x = 0.0
        self.push = None
        self.push_started = None
        self.fallen = False
        self.done = False
        return self._obs()

    def features(self, obs=None) -> np.ndarray:
        return np.zeros(1)

    def apply_push(self, force: float, duration: float, lateral: bool = False) -> Push:
        if self.done:
            raise ProtocolError("environment is terminated; call reset()")
        self.push = Push(float(force), float(duration), self.time)
        self.push_started = self.push
        return self.push

    @property
    def push_active(self) -> bool:
        return self.push is not None and self.push.active(self.time)

    def step(self, action):
        if self.done:
            raise ProtocolError("step() called on a terminated environment; call reset()")
        pushed = self.push is not None
        self.push_started = None
        if pushed and self.blowup_after_push:
            raise SimulationBlowup("scripted blowup", self.steps)
        self.steps += 1
        self.time = self.steps * self.control_dt
        self.x += self.command.c_x * self.control_dt
        if pushed and float(np.asarray(action).ravel()[0]) > 0.5:
            self.fallen = True
        self.done = self.fallen or self.steps >= self.cfg.max_steps
        return self._obs(), {"total": 0.0}, self.done


class MockFactory:
    """Callable returning fresh mock environments (optionally blowing up)."""

    def __init__(self, blowup: bool = False):
        self.blowup = blowup

    def __call__(self, seed: int = 0) -> MockEnv:
        env = MockEnv(seed)
        env.blowup_after_push = self.blowup
        return env


class ScriptedController:
    """Falls on the trials for which ``rule(direction, force, duration, k)``
    is true (``k`` is the 0-based trial index within the cell)."""

    def __init__(self, rule):
        self.rule = rule
        self._fall = False
        self.trials_seen = []

    def begin_trial(self, direction: str, force: float, duration: float, k: int) -> None:
        self._fall = bool(self.rule(direction, force, duration, k))
        self.trials_seen.append((direction, force, duration, k))

    def reset(self) -> None:
        pass

    def act(self, features, command, obs=None) -> np.ndarray:
        return np.array([1.0 if self._fall else 0.0])


def always_falls() -> ScriptedController:
    return ScriptedController(lambda *a: True)


def never_falls() -> ScriptedController:
    return ScriptedController(lambda *a: False)


def fails_at(k_fail: int) -> ScriptedController:
    """Succeeds on trials before ``k_fail`` (0-based) in every cell, then falls."""
    return ScriptedController(lambda d, f, t, k: k >= k_fail)
