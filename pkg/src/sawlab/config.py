"""Experiment configuration: strict YAML with presets.

Resolution order is built-in defaults, then the named preset, then the file,
then explicit overrides. Unknown keys are rejected at every level. Every run
writes the fully resolved config so it can be replayed from that file and the
seed alone.
"""

from __future__ import annotations

import copy
import dataclasses
import hashlib
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from sawlab.errors import ConfigError, InvalidArgument, SawError
from sawlab.rewards import RewardConfig
from sawlab.sim import (
    CommandConfig,
    ContactConfig,
    DomainRandomization,
    PushConfig,
    RobotModel,
    SimConfig,
)
from sawlab.train import EnvFactory, PpoConfig

SECTIONS = ("model", "sim", "domain_randomization", "reward", "policy", "ppo", "bench")
TOP_KEYS = ("preset", "seed", "out") + SECTIONS


@dataclass
class PolicyConfig:
    hidden: list = field(default_factory=lambda: [64, 64])
    action_scale: float = 0.5
    log_std_init: float = -2.0
    head_scale: float = 1.0

    def __post_init__(self):
        self.hidden = [int(h) for h in self.hidden]
        if not self.hidden or any(h < 1 for h in self.hidden):
            raise InvalidArgument("policy.hidden must be a non-empty list of positive sizes")
        if not self.action_scale > 0:
            raise InvalidArgument("policy.action_scale must be positive")


@dataclass
class RewardSection:
    """Scalar reward settings; stance targets come from the model."""

    weights: dict = field(default_factory=dict)
    scales: dict = field(default_factory=dict)
    grace: float = 0.2
    airtime_threshold: float = 0.4
    c_h: float | None = None      # None: the model's nominal base height

    def build(self, model: RobotModel) -> RewardConfig:
        _, _, tmax = model.gains()
        return RewardConfig(weights=dict(self.weights), scales=dict(self.scales),
                            c_h=model.base_height if self.c_h is None else float(self.c_h),
                            grace=self.grace, airtime_threshold=self.airtime_threshold,
                            c_feet=model.nominal_foot_pos(),
                            c_arm=[0.0] * (2 if model.with_arms else 0), t_max=tmax)


@dataclass
class BenchConfig:
    forces: list | None = None        # None: reference span scaled to model weight
    n_forces: int = 4
    durations: list = field(default_factory=lambda: [0.2, 0.3, 0.5])
    directions: list = field(default_factory=lambda: ["+x", "-x"])
    trials: int = 5
    stop_on_first_failure: bool = True
    settle: float = 2.0
    recovery: float = 10.0
    omega: float = 0.5
    rotation_durations: list = field(default_factory=lambda: [1.0, 5.0, 30.0])
    rotation_trials: int = 3
    circle_radius: float = 0.3048
    velocity: float = 1.0
    velocity_duration: float = 10.0
    stop_time: float = 3.0

    def __post_init__(self):
        if int(self.trials) < 1 or int(self.rotation_trials) < 1 or int(self.n_forces) < 1:
            raise InvalidArgument("bench trial counts must be >= 1")
        if not self.circle_radius > 0 or not self.velocity_duration > 0:
            raise InvalidArgument("bench.circle_radius and bench.velocity_duration must be > 0")


PRESETS: dict[str, dict] = {
    # 1 % per-step pushes of a single control step, short command windows
    "single-contact": {
        "sim": {"push": {"probability": 0.01, "force_range": [200.0, 800.0],
                         "duration_range": [0.02, 0.02]},
                "command": {"window_steps": [40, 100]}},
    },
    # longer, softer pushes and longer command windows
    "single-contact-plus-plus": {
        "sim": {"push": {"probability": 0.01, "force_range": [20.0, 200.0],
                         "duration_range": [0.2, 0.5]},
                "command": {"window_steps": [100, 300]}},
    },
    # desk-budget check: stand under small single-step pushes with a tiny network
    "balance-smoke": {
        "model": {"with_arms": False},
        "sim": {"push": {"probability": 0.01, "force_range": [20.0, 60.0],
                         "duration_range": [0.02, 0.02]},
                "command": {"categories": ["standing"]}},
        "domain_randomization": {"enabled": False},
        "policy": {"hidden": [16, 16]},
        "ppo": {"batch_steps": 2000, "num_envs": 4, "lr": 1.0e-3, "iterations": 300,
                "eval_every": 10, "eval_episodes": 20, "checkpoint_every": 50},
    },
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


_SIM_SUBSECTIONS = {"contact": ContactConfig, "command": CommandConfig, "push": PushConfig}


def _check_keys(d: dict, cls, path: str) -> None:
    if not isinstance(d, dict):
        raise ConfigError(f"section {path!r} must be a mapping")
    unknown = sorted(set(d) - {f.name for f in dataclasses.fields(cls)})
    if unknown:
        raise ConfigError(f"unknown keys in {path}: {unknown}")
    if cls is SimConfig:
        for name, sub in _SIM_SUBSECTIONS.items():
            if isinstance(d.get(name), dict):
                _check_keys(d[name], sub, f"{path}.{name}")


def _defaults() -> dict:
    def plain(obj):
        return json.loads(json.dumps(asdict(obj)))
    return {"preset": None, "seed": 0, "out": None,
            "model": plain(RobotModel()), "sim": plain(SimConfig()),
            "domain_randomization": plain(DomainRandomization()),
            "reward": plain(RewardSection()), "policy": plain(PolicyConfig()),
            "ppo": plain(PpoConfig()), "bench": plain(BenchConfig())}


_CLASSES = {"model": RobotModel, "sim": SimConfig, "domain_randomization": DomainRandomization,
            "reward": RewardSection, "policy": PolicyConfig, "ppo": PpoConfig,
            "bench": BenchConfig}


@dataclass
class ExperimentConfig:
    preset: str | None
    seed: int
    out: str | None
    model: RobotModel
    sim: SimConfig
    domain_randomization: DomainRandomization
    reward: RewardSection
    policy: PolicyConfig
    ppo: PpoConfig
    bench: BenchConfig
    resolved: dict = field(repr=False, default_factory=dict)

    # --- construction ---
    @classmethod
    def resolve(cls, data: dict | None = None, preset: str | None = None,
                overrides: dict | None = None) -> ExperimentConfig:
        data = dict(data or {})
        for src, d in (("config", data), ("overrides", overrides or {})):
            unknown = sorted(set(d) - set(TOP_KEYS))
            if unknown:
                raise ConfigError(f"unknown top-level keys in {src}: {unknown}")
        name = preset if preset is not None else data.get("preset")
        if overrides and overrides.get("preset") is not None:
            name = overrides["preset"]
        if name is not None and name not in PRESETS:
            raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
        # preset keys first so the file can still override them
        base = _defaults()
        user = {k: v for k, v in data.items() if k != "preset"}
        merged = _merge(base, PRESETS.get(name, {}) if name else {})
        merged = _merge(merged, user)
        merged = _merge(merged, {k: v for k, v in (overrides or {}).items() if v is not None})
        merged["preset"] = name
        return cls.from_resolved(merged)

    @classmethod
    def from_resolved(cls, d: dict) -> ExperimentConfig:
        unknown = sorted(set(d) - set(TOP_KEYS))
        if unknown:
            raise ConfigError(f"unknown top-level keys: {unknown}")
        missing = [k for k in TOP_KEYS if k not in d]
        if missing:
            raise ConfigError(f"resolved config lacks keys {missing}")
        built = {}
        for sec, klass in _CLASSES.items():
            _check_keys(d[sec], klass, sec)
            try:
                built[sec] = klass(**copy.deepcopy(d[sec]))
            except (SawError, TypeError, ValueError) as e:
                raise ConfigError(f"invalid {sec} section: {e}") from None
        try:
            seed = int(d["seed"])
        except (TypeError, ValueError):
            raise ConfigError("seed must be an integer") from None
        return cls(preset=d["preset"], seed=seed, out=d["out"], resolved=copy.deepcopy(d), **built)

    @classmethod
    def load(cls, path=None, preset: str | None = None,
             overrides: dict | None = None) -> ExperimentConfig:
        data = {}
        if path is not None:
            try:
                text = Path(path).read_text()
            except OSError as e:
                raise ConfigError(f"cannot read config {path}: {e}") from None
            try:
                data = yaml.safe_load(text) or {}
            except yaml.YAMLError as e:
                raise ConfigError(f"config {path} is not valid YAML: {e}") from None
            if not isinstance(data, dict):
                raise ConfigError("config file must contain a mapping")
        return cls.resolve(data, preset, overrides)

    # --- outputs ---
    def to_dict(self) -> dict:
        return copy.deepcopy(self.resolved)

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=True)

    def write(self, path) -> Path:
        p = Path(path)
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(self.dumps())
        return p

    def hash(self) -> str:
        """Digest of everything that affects results (the output path does not)."""
        d = self.to_dict()
        d.pop("out", None)
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    # --- builders ---
    def reward_config(self) -> RewardConfig:
        return self.reward.build(self.model)

    def factory(self) -> EnvFactory:
        return EnvFactory(self.model, self.sim, self.reward_config(), self.domain_randomization)

    def make_policy(self, seed: int | None = None):
        from sawlab.policy import LstmPolicy
        ms = self.model.mirror_spec()
        p = self.policy
        return LstmPolicy(ms.obs_dim, self.model.n_act, tuple(p.hidden), self.model.nominal_pose(),
                          action_scale=p.action_scale, log_std_init=p.log_std_init,
                          seed=self.seed if seed is None else seed, mirror=ms,
                          head_scale=p.head_scale)

    def grid(self, **changes):
        from sawlab.bench import DisturbanceGrid
        b = self.bench
        kw = dict(durations=b.durations, directions=b.directions, trials=b.trials,
                  stop_on_first_failure=b.stop_on_first_failure, settle=b.settle,
                  recovery=b.recovery)
        kw.update({k: v for k, v in changes.items() if v is not None})
        forces = kw.pop("forces", None) or b.forces
        if forces is None:
            weight = self.model.total_mass * self.sim.gravity
            return DisturbanceGrid.scaled(weight, b.n_forces, **kw)
        return DisturbanceGrid(forces=forces, **kw)
