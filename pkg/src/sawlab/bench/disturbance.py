"""Disturbance-rejection sweep over a force x duration grid.

Each trial: settle standing, push once, watch a recovery window; the trial
succeeds iff the robot never falls. Within a cell, trials stop at the first
failure when ``stop_on_first_failure`` is set, so the attempt count is the
1-based index of that failure (or the full trial count).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from sawlab.bench.protocols import SETTLE_TIME, Phase, record_episode
from sawlab.core import EpisodeLog
from sawlab.errors import InvalidArgument, ProtocolError, SchemaError

log = logging.getLogger("sawlab.bench")

DIRECTIONS = ("+x", "-x", "+y", "-y")
RECOVERY_TIME = 10.0
# Reference force span for a ~428 N (43.6 kg) humanoid; the upper end is about
# half its weight. Sweeps on other models scale it by weight ratio.
REFERENCE_FORCES = (79.0, 214.0)
REFERENCE_WEIGHT = 428.0
DEFAULT_DURATIONS = (0.2, 0.3, 0.5)


def _increasing(xs, name):
    xs = [float(x) for x in xs]
    if not xs:
        raise InvalidArgument(f"{name} must be non-empty")
    if any(b <= a for a, b in zip(xs, xs[1:])):
        raise InvalidArgument(f"{name} must be strictly increasing")
    if xs[0] <= 0:
        raise InvalidArgument(f"{name} must be positive")
    return xs


@dataclass
class DisturbanceGrid:
    forces: list
    durations: list = field(default_factory=lambda: list(DEFAULT_DURATIONS))
    directions: list = field(default_factory=lambda: ["+x", "-x"])
    trials: int = 5
    stop_on_first_failure: bool = True
    settle: float = SETTLE_TIME
    recovery: float = RECOVERY_TIME

    def __post_init__(self):
        self.forces = _increasing(self.forces, "forces")
        self.durations = _increasing(self.durations, "durations")
        self.directions = list(self.directions)
        bad = [d for d in self.directions if d not in DIRECTIONS]
        if bad or not self.directions or len(set(self.directions)) != len(self.directions):
            raise InvalidArgument(f"directions must be distinct values from {DIRECTIONS}")
        if int(self.trials) < 1:
            raise InvalidArgument("trials must be >= 1")
        self.trials = int(self.trials)
        if self.settle < 0 or not self.recovery > 0:
            raise InvalidArgument("settle must be >= 0 and recovery > 0")

    @classmethod
    def scaled(cls, weight_n: float, n_forces: int = 4, **kw) -> DisturbanceGrid:
        """Reference span scaled by ``weight_n / REFERENCE_WEIGHT``."""
        s = weight_n / REFERENCE_WEIGHT
        forces = np.linspace(REFERENCE_FORCES[0] * s, REFERENCE_FORCES[1] * s, n_forces)
        return cls(forces=[round(float(f), 3) for f in forces], **kw)

    def to_dict(self) -> dict:
        return {"forces": self.forces, "durations": self.durations,
                "directions": self.directions, "trials": self.trials,
                "stop_on_first_failure": self.stop_on_first_failure,
                "settle": self.settle, "recovery": self.recovery}

    @classmethod
    def from_dict(cls, d: dict) -> DisturbanceGrid:
        return cls(**d)


@dataclass
class TrialResult:
    trial: int
    seed: int
    recovered: bool
    fell_before_push: bool = False
    blowup: bool = False
    log_path: str | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class CellResult:
    direction: str
    force: float
    duration: float
    trials: list = field(default_factory=list)

    @property
    def impulse(self) -> float:
        return self.force * self.duration

    @property
    def attempts(self) -> int:
        return len(self.trials)

    @property
    def successes(self) -> int:
        return sum(t.recovered for t in self.trials)

    @property
    def success_pct(self) -> float:
        return 100.0 * self.successes / self.attempts if self.attempts else 0.0

    @property
    def recovery_flags(self) -> list[bool]:
        return [t.recovered for t in self.trials]

    def to_dict(self) -> dict:
        return {"direction": self.direction, "force": self.force, "duration": self.duration,
                "impulse": self.impulse, "attempts": self.attempts,
                "successes": self.successes, "success_pct": self.success_pct,
                "trials": [t.to_dict() for t in self.trials]}

    @classmethod
    def from_dict(cls, d: dict) -> CellResult:
        cell = cls(d["direction"], float(d["force"]), float(d["duration"]),
                   [TrialResult(**t) for t in d["trials"]])
        if cell.attempts != d["attempts"] or cell.successes != d["successes"]:
            raise SchemaError("cell counts disagree with its trials")
        return cell


def _signed(direction: str, force: float):
    sign = -1.0 if direction.startswith("-") else 1.0
    return sign * force, direction.endswith("y")


def score_trial(trial_log: EpisodeLog) -> TrialResult:
    """Outcome of one recorded trial (live or imported): recovered iff no
    record is flagged fallen and the simulation did not blow up."""
    meta = trial_log.meta
    pushes = [r for r in trial_log.records if r.push is not None]
    fell_before = bool(trial_log.fallen and not pushes and not meta.get("blowup", False))
    blow = bool(meta.get("blowup", False))
    return TrialResult(trial=int(meta.get("trial", 0)), seed=int(meta.get("seed", 0)),
                       recovered=not trial_log.fallen and not blow,
                       fell_before_push=fell_before, blowup=blow)


def _trial_phases(grid: DisturbanceGrid, direction, force, duration):
    f, lateral = _signed(direction, force)
    return [Phase(grid.settle), Phase(grid.recovery, push=(f, duration, lateral), mark="push")]


def cell_seed(seed: int, direction: str, force: float, duration: float, k: int) -> int:
    """Per-trial seed that depends only on the cell and trial index."""
    di = DIRECTIONS.index(direction)
    key = [int(seed), di, int(round(force * 1000)), int(round(duration * 1000)), int(k)]
    return int(np.random.SeedSequence(key).generate_state(1)[0] & 0x7FFFFFFF)


def run_disturbance_sweep(factory, controller, grid: DisturbanceGrid, seed: int = 0,
                          log_dir=None) -> list[CellResult]:
    """Run the grid with a fresh environment per trial.

    ``controller`` needs ``reset()`` and ``act(features, command, obs)``; an
    optional ``begin_trial(direction, force, duration, k)`` hook is called
    before each trial (used by scripted controllers). Trial logs are written
    under ``log_dir`` when given.
    """
    env0 = factory(seed)
    supported = getattr(env0, "directions", ("+x", "-x"))
    missing = [d for d in grid.directions if d not in supported]
    if missing:
        raise ProtocolError(f"environment cannot push in directions {missing}; "
                            "score recorded logs for those instead")
    n_act = getattr(env0, "n_act", None)
    act_dim = getattr(controller, "act_dim", n_act)
    if n_act is not None and act_dim != n_act:
        raise InvalidArgument(f"controller outputs {act_dim} actions, model has {n_act}")
    out_dir = Path(log_dir) if log_dir is not None else None
    cells = []
    for direction in grid.directions:
        for force in grid.forces:
            for duration in grid.durations:
                cell = CellResult(direction, force, duration)
                for k in range(grid.trials):
                    s = cell_seed(seed, direction, force, duration, k)
                    if hasattr(controller, "begin_trial"):
                        controller.begin_trial(direction, force, duration, k)
                    env = factory(s)
                    tlog = record_episode(env, controller, s,
                                          _trial_phases(grid, direction, force, duration),
                                          meta={"protocol": "disturbance", "direction": direction,
                                                "force": force, "duration": duration, "trial": k})
                    res = score_trial(tlog)
                    if out_dir is not None:
                        name = f"{direction}_{force:g}N_{duration:g}s_{k}.jsonl"
                        tlog.write(out_dir / name)
                        res.log_path = name
                    cell.trials.append(res)
                    if grid.stop_on_first_failure and not res.recovered:
                        break
                log.info("%s %g N x %g s: %d/%d", direction, force, duration, cell.successes,
                         cell.attempts)
                cells.append(cell)
    return cells


def grid_from_logs(logs: list[EpisodeLog], stop_on_first_failure: bool = True,
                   trials: int | None = None) -> list[CellResult]:
    """Score imported trial logs. Each log's meta must carry direction, force
    and duration (or its first push record supplies force and duration);
    trials are ordered by ``meta["trial"]`` and the stop rule is re-applied."""
    groups: dict = {}
    for lg in logs:
        m = lg.meta
        push = next((r.push for r in lg.records if r.push is not None), None)
        force = m.get("force", abs(push["force"]) if push else None)
        duration = m.get("duration", push["duration"] if push else None)
        direction = m.get("direction")
        if direction is None and push is not None:
            direction = "+x" if push["force"] >= 0 else "-x"
        if force is None or duration is None or direction not in DIRECTIONS:
            raise SchemaError("trial log lacks direction/force/duration")
        groups.setdefault((direction, float(force), float(duration)), []).append(lg)
    cells = []
    for key in sorted(groups, key=lambda k: (DIRECTIONS.index(k[0]), k[1], k[2])):
        cell = CellResult(*key)
        for lg in sorted(groups[key], key=lambda g: int(g.meta.get("trial", 0))):
            if trials is not None and cell.attempts >= trials:
                break
            res = score_trial(lg)
            cell.trials.append(res)
            if stop_on_first_failure and not res.recovered:
                break
        cells.append(cell)
    return cells
