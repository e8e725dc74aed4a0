"""Exception hierarchy shared across the package."""

from __future__ import annotations


class SawError(Exception):
    """Base class for all package errors."""


class InvalidArgument(SawError, ValueError):
    """Input outside an operation's contract (shape, norm, range)."""


class ProtocolError(SawError, RuntimeError):
    """An operation was invoked in the wrong order or state."""


class SchemaError(SawError, ValueError):
    """Serialized data is missing channels or has an unexpected version."""


class ConfigError(SawError, ValueError):
    """Configuration file is malformed or contains unknown keys."""


class SimulationBlowup(SawError, RuntimeError):
    """The physics state became non-finite or exceeded sane bounds."""

    def __init__(self, message: str, step: int):
        super().__init__(f"{message} (physics step {step})")
        self.step = step


class TrainingError(SawError, RuntimeError):
    """Non-finite loss or failed consistency check during optimization."""

    def __init__(self, message: str, dump: dict | None = None):
        super().__init__(message)
        self.dump = dump or {}
