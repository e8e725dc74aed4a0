"""Planar biped simulation: model, physics kernel, and control-rate environment."""

from sawlab.sim.commands import Push, maybe_push, sample_command
from sawlab.sim.config import (
    CATEGORIES,
    CommandConfig,
    ContactConfig,
    DomainRandomization,
    PushConfig,
    SimConfig,
)
from sawlab.sim.env import PhysicsState, SawEnv, Simulator, StepInfo, rollout, step_physics
from sawlab.sim.model import CompiledModel, RobotModel, compile_model

__all__ = [
    "CATEGORIES", "CommandConfig", "CompiledModel", "ContactConfig", "DomainRandomization",
    "PhysicsState", "Push", "PushConfig", "RobotModel", "SawEnv", "SimConfig", "Simulator",
    "StepInfo", "compile_model", "maybe_push", "rollout", "sample_command", "step_physics",
]
