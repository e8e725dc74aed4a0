"""Episode logs: time-indexed trajectory records persisted as JSON lines.

The first line is a header (schema version, dt, hashes, optional initial
observation); each following line is one control step.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sawlab.core.types import Command, Observation
from sawlab.errors import InvalidArgument, SchemaError

SCHEMA = "sawlab.episode_log"
SCHEMA_VERSION = 1


@dataclass(eq=False)
class EpisodeRecord:
    obs: Observation
    cmd: Command
    reward: dict[str, float] = field(default_factory=dict)
    push: dict | None = None  # set on the step a push starts
    push_active: bool = False
    fallen: bool = False
    terminal: bool = False

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpisodeRecord):
            return NotImplemented
        return (self.obs == other.obs and self.cmd == other.cmd and self.reward == other.reward
                and self.push == other.push and self.push_active == other.push_active
                and self.fallen == other.fallen and self.terminal == other.terminal)

    @property
    def time(self) -> float:
        return self.obs.time

    def to_dict(self) -> dict:
        return {
            "obs": self.obs.to_dict(),
            "cmd": self.cmd.to_list(),
            "reward": self.reward,
            "push": self.push,
            "push_active": self.push_active,
            "fallen": self.fallen,
            "terminal": self.terminal,
        }

    @classmethod
    def from_dict(cls, d: dict) -> EpisodeRecord:
        try:
            return cls(
                obs=Observation.from_dict(d["obs"]),
                cmd=Command.from_list(d["cmd"]),
                reward={k: float(v) for k, v in d.get("reward", {}).items()},
                push=d.get("push"),
                push_active=bool(d.get("push_active", False)),
                fallen=bool(d.get("fallen", False)),
                terminal=bool(d.get("terminal", False)),
            )
        except KeyError as e:
            raise SchemaError(f"episode record missing channel {e}") from None


@dataclass(eq=False)
class EpisodeLog:
    dt: float
    records: list[EpisodeRecord] = field(default_factory=list)
    initial: Observation | None = None
    model_hash: str = ""
    config_hash: str = ""
    meta: dict = field(default_factory=dict)
    # observation channels present in a loaded file; None means all
    channels: frozenset | None = field(default=None, compare=False, repr=False)

    def require(self, *names: str) -> None:
        """Raise SchemaError unless every named observation channel is present."""
        if self.channels is None:
            return
        missing = [n for n in names if n not in self.channels]
        if missing:
            raise SchemaError(f"episode log lacks channels {missing}")

    def window(self, t0: float, t1: float = math.inf) -> EpisodeLog:
        """Sub-log of records with ``t0 < time <= t1``; the record at ``t0``
        (or the original initial observation) becomes the new initial one."""
        eps = 1e-9
        init = self.initial
        for r in self.records:
            if abs(r.time - t0) <= eps:
                init = r.obs
        recs = [r for r in self.records if t0 + eps < r.time <= t1 + eps]
        return EpisodeLog(self.dt, recs, init, self.model_hash, self.config_hash,
                          dict(self.meta), self.channels)

    def __eq__(self, other) -> bool:
        if not isinstance(other, EpisodeLog):
            return NotImplemented
        return (self.dt == other.dt and self.records == other.records
                and self.initial == other.initial and self.model_hash == other.model_hash
                and self.config_hash == other.config_hash and self.meta == other.meta)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, rec: EpisodeRecord) -> None:
        self.records.append(rec)

    @property
    def fallen(self) -> bool:
        return any(r.fallen for r in self.records)

    @property
    def duration(self) -> float:
        if not self.records:
            return 0.0
        start = self.initial.time if self.initial is not None else self.records[0].time
        return self.records[-1].time - start

    def start_obs(self) -> Observation:
        if self.initial is not None:
            return self.initial
        if not self.records:
            raise SchemaError("empty episode log")
        return self.records[0].obs

    def times(self) -> np.ndarray:
        return np.array([r.time for r in self.records])

    def channel(self, name: str) -> np.ndarray:
        """Stack an observation field across records."""
        try:
            return np.stack([getattr(r.obs, name) for r in self.records])
        except AttributeError:
            raise SchemaError(f"unknown observation channel {name!r}") from None

    def validate(self, terminal_required: bool = True) -> None:
        """Check spacing, single terminal record, and monotone fall flag."""
        if not self.records:
            raise InvalidArgument("episode log has no records")
        t = self.times()
        if len(t) > 1:
            gaps = np.diff(t)
            if np.any(gaps <= 0):
                raise InvalidArgument("records are not strictly time-ordered")
            if not np.allclose(gaps, self.dt, rtol=0, atol=1e-9):
                raise InvalidArgument("records are not spaced by dt")
        terminals = [i for i, r in enumerate(self.records) if r.terminal]
        if terminal_required and terminals != [len(self.records) - 1]:
            raise InvalidArgument(f"expected exactly one terminal record at the end, got {terminals}")
        fallen = [r.fallen for r in self.records]
        if any(a and not b for a, b in zip(fallen, fallen[1:])):
            raise InvalidArgument("fall flag is not monotone")

    def header(self) -> dict:
        return {
            "schema": SCHEMA,
            "version": SCHEMA_VERSION,
            "dt": self.dt,
            "model_hash": self.model_hash,
            "config_hash": self.config_hash,
            "initial": None if self.initial is None else self.initial.to_dict(),
            "meta": self.meta,
        }

    def dumps(self) -> str:
        lines = [json.dumps(self.header(), allow_nan=False)]
        lines += [json.dumps(r.to_dict(), allow_nan=False) for r in self.records]
        return "\n".join(lines) + "\n"

    def write(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.dumps())
        return path

    @classmethod
    def loads(cls, text: str) -> EpisodeLog:
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines:
            raise SchemaError("empty episode log file")
        head = json.loads(lines[0])
        if head.get("schema") != SCHEMA:
            raise SchemaError(f"not an episode log (schema={head.get('schema')!r})")
        if head.get("version") != SCHEMA_VERSION:
            raise SchemaError(f"unsupported episode log version {head.get('version')!r}")
        dt = float(head["dt"])
        if not (math.isfinite(dt) and dt > 0):
            raise SchemaError(f"invalid dt {dt!r}")
        init = head.get("initial")
        records = [EpisodeRecord.from_dict(json.loads(ln)) for ln in lines[1:]]
        present = None
        if len(lines) > 1:
            obs0 = json.loads(lines[1]).get("obs", {})
            present = frozenset(obs0)
        return cls(
            dt=dt,
            records=records,
            initial=None if init is None else Observation.from_dict(init),
            model_hash=head.get("model_hash", ""),
            config_hash=head.get("config_hash", ""),
            meta=head.get("meta", {}),
            channels=present,
        )

    @classmethod
    def read(cls, path) -> EpisodeLog:
        return cls.loads(Path(path).read_text())
