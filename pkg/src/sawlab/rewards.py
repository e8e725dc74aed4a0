"""Minimally-constraining standing/walking reward.

Every term except feet airtime is bounded in (0, 1]; the total is a weighted
sum. Terms are written against the full 3D observation; a planar simulator
simply leaves the lateral and yaw channels at zero.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from sawlab.core import STANDING, Command, Observation
from sawlab.core.quaternion import UNIT_TOL
from sawlab.errors import InvalidArgument

TERMS = (
    "vel_x", "vel_y", "yaw", "rollpitch", "feet_contact", "base_height", "feet_airtime",
    "feet_orientation", "feet_position", "arm", "base_accel", "action_diff", "torque",
)

DEFAULT_WEIGHTS = {
    "vel_x": 0.15, "vel_y": 0.15, "yaw": 0.1, "rollpitch": 0.2, "feet_contact": 0.1,
    "base_height": 0.05, "feet_airtime": 1.0, "feet_orientation": 0.05,
    "feet_position": 0.05, "arm": 0.03, "base_accel": 0.1, "action_diff": 0.02,
    "torque": 0.02,
}

DEFAULT_SCALES = {
    "velocity": 5.0, "yaw": 300.0, "rollpitch": 30.0, "base_height": 20.0,
    "feet_position": 3.0, "feet_orientation": 1.0, "arm": 3.0, "base_accel": 0.01,
    "action_diff": 0.02, "torque": 0.02,
}

# Tolerance on the grace-window comparison so that k * dt round-off never
# drops the last step inside the window.
_GRACE_EPS = 1e-9


@dataclass
class RewardConfig:
    weights: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_WEIGHTS))
    scales: dict[str, float] = field(default_factory=lambda: dict(DEFAULT_SCALES))
    c_h: float = 0.80
    grace: float = 0.2
    airtime_threshold: float = 0.4
    c_feet: np.ndarray = field(default_factory=lambda: np.array([[0.0, 0.1, -0.74],
                                                                [0.0, -0.1, -0.74]]))
    c_arm: np.ndarray = field(default_factory=lambda: np.zeros(0))
    c_feet_rpy: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    t_max: np.ndarray = field(default_factory=lambda: np.ones(1))

    def __post_init__(self):
        unknown = set(self.weights) - set(TERMS)
        if unknown:
            raise InvalidArgument(f"unknown reward terms {sorted(unknown)}")
        self.weights = {k: float(self.weights.get(k, DEFAULT_WEIGHTS[k])) for k in TERMS}
        unknown = set(self.scales) - set(DEFAULT_SCALES)
        if unknown:
            raise InvalidArgument(f"unknown reward scales {sorted(unknown)}")
        self.scales = {k: float(self.scales.get(k, DEFAULT_SCALES[k])) for k in DEFAULT_SCALES}
        self.c_feet = np.asarray(self.c_feet, dtype=float).reshape(2, 3)
        self.c_feet_rpy = np.asarray(self.c_feet_rpy, dtype=float).reshape(2, 3)
        self.c_arm = np.asarray(self.c_arm, dtype=float)
        self.t_max = np.asarray(self.t_max, dtype=float)
        if any(w < 0 for w in self.weights.values()):
            raise InvalidArgument("reward weights must be non-negative")
        if not self.grace > 0 or not self.airtime_threshold > 0:
            raise InvalidArgument("grace and airtime_threshold must be positive")
        if self.t_max.size == 0 or not np.all(self.t_max > 0):
            raise InvalidArgument("t_max must be positive elementwise")

    @property
    def non_airtime_weight(self) -> float:
        return sum(w for k, w in self.weights.items() if k != "feet_airtime")


class ContactTracker:
    """Per-environment foot contact history.

    ``airtime[f]`` counts control periods since liftoff and is zero while in
    contact. On a touchdown step the pre-touchdown airtime is latched in
    ``touchdown_airtime`` for the airtime term.
    """

    def __init__(self, dt: float):
        if not dt > 0:
            raise InvalidArgument("dt must be positive")
        self.dt = float(dt)
        self.reset()

    def reset(self, contact=(True, True), time: float = 0.0) -> None:
        self.contact = np.array(contact, dtype=bool)
        self.airtime = np.zeros(2)
        self.touchdown = np.zeros(2, dtype=bool)
        self.touchdown_airtime = np.zeros(2)
        self.time = float(time)
        self.last_single_contact_time = self.time if self.contact.sum() == 1 else -math.inf

    def update(self, contact, time: float) -> None:
        c = np.asarray(contact, dtype=bool)
        if time < self.time:
            raise InvalidArgument("contact tracker time went backwards")
        self.touchdown = c & ~self.contact
        self.touchdown_airtime = np.where(self.touchdown, self.airtime, 0.0)
        self.airtime = np.where(c, 0.0, self.airtime + self.dt)
        self.contact = c
        self.time = float(time)
        if c.sum() == 1:
            self.last_single_contact_time = self.time


def _finite(*xs) -> None:
    for x in xs:
        if not np.all(np.isfinite(x)):
            raise InvalidArgument("non-finite value in reward input")


# --- batched inputs ----------------------------------------------------------

@dataclass
class RewardInputs:
    """Everything the reward reads, stacked along a leading batch axis.

    ``cmd`` rows are ``(c_x, c_y, c_yaw, heading_ref)`` and ``torso`` rows are
    ``(w, x, y, z)``. ``last_single`` is the tracker's last single-contact
    time (``-inf`` if never) and ``touchdown_airtime`` the airtime latched on a
    touchdown step.
    """

    cmd: np.ndarray
    base_linvel: np.ndarray
    torso: np.ndarray
    base_z: np.ndarray
    foot_pos: np.ndarray
    foot_rpy: np.ndarray
    arm_pos: np.ndarray
    base_acc: np.ndarray
    action: np.ndarray
    prev_action: np.ndarray
    torque: np.ndarray
    time: np.ndarray
    last_single: np.ndarray
    touchdown: np.ndarray
    touchdown_airtime: np.ndarray

    def __len__(self) -> int:
        return self.cmd.shape[0]

    @classmethod
    def from_observations(cls, observations, commands, trackers=None) -> RewardInputs:
        """Stack observations; without trackers no single contact or touchdown
        has been seen."""
        obs = list(observations)
        cmds = list(commands)
        if len(obs) != len(cmds):
            raise InvalidArgument("need one command per observation")
        n = len(obs)
        if trackers is None:
            last = np.full(n, -math.inf)
            td = np.zeros((n, 2), bool)
            tda = np.zeros((n, 2))
        else:
            trackers = list(trackers)
            last = np.array([t.last_single_contact_time for t in trackers], float)
            td = np.array([t.touchdown for t in trackers], bool)
            tda = np.array([t.touchdown_airtime for t in trackers], float)
        try:
            return cls(
                cmd=np.array([c.to_list() for c in cmds], float).reshape(n, 4),
                base_linvel=np.array([o.base_linvel for o in obs]).reshape(n, 3),
                torso=np.array([o.torso_orientation.as_array() for o in obs]).reshape(n, 4),
                base_z=np.array([o.base_pos[2] for o in obs], float),
                foot_pos=np.array([o.foot_pos for o in obs]).reshape(n, 2, 3),
                foot_rpy=np.array([o.foot_orientation for o in obs]).reshape(n, 2, 3),
                arm_pos=np.array([o.arm_pos for o in obs], float).reshape(n, -1),
                base_acc=np.array([o.base_acc for o in obs]).reshape(n, 3),
                action=np.array([o.action for o in obs], float).reshape(n, -1),
                prev_action=np.array([o.prev_action for o in obs], float).reshape(n, -1),
                torque=np.array([o.applied_torque for o in obs], float).reshape(n, -1),
                time=np.array([o.time for o in obs], float),
                last_single=last, touchdown=td, touchdown_airtime=tda)
        except ValueError:
            raise InvalidArgument("observations in a batch must share their shapes") from None


def _one(obs: Observation, cmd: Command, tracker: ContactTracker | None = None) -> RewardInputs:
    return RewardInputs.from_observations([obs], [cmd], None if tracker is None else [tracker])


def _standing(cmd: np.ndarray) -> np.ndarray:
    return (cmd[:, 0] == 0.0) & (cmd[:, 1] == 0.0) & (cmd[:, 2] == 0.0)


def _wrap(a: np.ndarray) -> np.ndarray:
    w = a - 2.0 * np.pi * np.round(a / (2.0 * np.pi))
    return np.where(w <= -np.pi, w + 2.0 * np.pi, w)


def _yaw_q(yaw: np.ndarray) -> np.ndarray:
    z = np.zeros_like(yaw)
    return np.stack([np.cos(0.5 * yaw), z, z, np.sin(0.5 * yaw)], axis=-1)


def _qmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a[:, 0], a[:, 1], a[:, 2], a[:, 3]
    bw, bx, by, bz = b[:, 0], b[:, 1], b[:, 2], b[:, 3]
    return np.stack([aw * bw - ax * bx - ay * by - az * bz,
                     aw * bx + ax * bw + ay * bz - az * by,
                     aw * by - ax * bz + ay * bw + az * bx,
                     aw * bz + ax * by - ay * bx + az * bw], axis=-1)


_PAIRS = ((0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3))


def _qd(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # 1 - <a, b>^2 for unit rows, as a sum of squared 2x2 minors (see core.qd)
    s = sum((a[:, i] * b[:, j] - a[:, j] * b[:, i]) ** 2 for i, j in _PAIRS)
    return np.minimum(1.0, s)


def _torso_yaw(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    return np.arctan2(2.0 * (w * z + x * y), 1.0 - 2.0 * (y * y + z * z))


def batch_terms(inp: RewardInputs, cfg: RewardConfig, names=TERMS) -> dict[str, np.ndarray]:
    """Unweighted value of the named terms (default: all, keyed as in
    :data:`TERMS`) for every batch row."""
    _finite(inp.cmd, inp.base_linvel, inp.torso, inp.base_z, inp.foot_pos, inp.foot_rpy,
            inp.arm_pos, inp.base_acc, inp.action, inp.prev_action, inp.torque, inp.time,
            inp.touchdown_airtime)
    k = cfg.scales
    cmd = inp.cmd
    st = _standing(cmd)
    out = {}
    for name in names:
        fn = _KERNELS.get(name)
        if fn is None:
            raise InvalidArgument(f"unknown reward term {name!r}")
        out[name] = fn(inp, cfg, k, cmd, st)
    return out


def _k_vel(axis):
    def f(inp, cfg, k, cmd, st):
        e = inp.base_linvel[:, axis] - cmd[:, axis]
        return np.where(st, np.exp(-k["velocity"] * np.abs(e)), np.exp(-k["velocity"] * e * e))
    return f


def _unit_torso(inp):
    norms = np.sqrt(np.sum(inp.torso * inp.torso, axis=1))
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        raise InvalidArgument("torso orientation is not unit-norm")
    return _yaw_q(_torso_yaw(inp.torso))


def _k_yaw(inp, cfg, k, cmd, st):
    return np.exp(-k["yaw"] * _qd(_unit_torso(inp), _yaw_q(cmd[:, 3])))


def _k_rollpitch(inp, cfg, k, cmd, st):
    conj = _unit_torso(inp) * np.array([1.0, -1.0, -1.0, -1.0])
    q_rp = _qmul(conj, inp.torso)
    ident = np.broadcast_to(np.array([1.0, 0.0, 0.0, 0.0]), q_rp.shape)
    return np.exp(-k["rollpitch"] * _qd(q_rp, ident))


def _k_contact(inp, cfg, k, cmd, st):
    recent = inp.time - inp.last_single <= cfg.grace + _GRACE_EPS
    return np.where(st | recent, 1.0, 0.0)


def _k_height(inp, cfg, k, cmd, st):
    return np.exp(-k["base_height"] * np.abs(inp.base_z - cfg.c_h))


def _k_airtime(inp, cfg, k, cmd, st):
    paid = np.where(inp.touchdown, inp.touchdown_airtime - cfg.airtime_threshold, 0.0)
    return np.where(st, 1.0, paid.sum(axis=1))


def _k_orient(inp, cfg, k, cmd, st):
    err = inp.foot_rpy - cfg.c_feet_rpy
    rp = np.abs(err[:, :, :2]).sum(axis=(1, 2))
    yaw = np.abs(_wrap(err[:, :, 2])).sum(axis=1)
    turning = np.abs(cmd[:, 2]) > 0
    return np.exp(-k["feet_orientation"] * np.where(turning, rp, rp + yaw))


def _k_position(inp, cfg, k, cmd, st):
    off = np.abs(inp.foot_pos - cfg.c_feet).sum(axis=(1, 2))
    return np.where(st, np.exp(-k["feet_position"] * off), 1.0)


def _k_arm(inp, cfg, k, cmd, st):
    if inp.arm_pos.shape[1] == 0:
        return np.ones(len(inp))
    if cfg.c_arm.shape != (inp.arm_pos.shape[1],):
        raise InvalidArgument("arm_pos does not match c_arm")
    d = inp.arm_pos - cfg.c_arm
    return np.exp(-k["arm"] * np.sqrt(np.sum(d * d, axis=1)))


def _k_accel(inp, cfg, k, cmd, st):
    return np.exp(-k["base_accel"] * np.abs(inp.base_acc).sum(axis=1))


def _k_action(inp, cfg, k, cmd, st):
    return np.exp(-k["action_diff"] * np.abs(inp.action - inp.prev_action).sum(axis=1))


def _k_torque(inp, cfg, k, cmd, st):
    n = inp.torque.shape[1]
    if n == 0:
        raise InvalidArgument("torque term needs at least one actuator")
    if cfg.t_max.shape != (n,):
        raise InvalidArgument(f"t_max shape {cfg.t_max.shape} != torque shape ({n},)")
    return np.exp(-k["torque"] * np.mean(np.abs(inp.torque) / cfg.t_max, axis=1))


_KERNELS = {
    "vel_x": _k_vel(0), "vel_y": _k_vel(1), "yaw": _k_yaw, "rollpitch": _k_rollpitch,
    "feet_contact": _k_contact, "base_height": _k_height, "feet_airtime": _k_airtime,
    "feet_orientation": _k_orient, "feet_position": _k_position, "arm": _k_arm,
    "base_accel": _k_accel, "action_diff": _k_action, "torque": _k_torque,
}


def batch_total(terms: dict[str, np.ndarray], cfg: RewardConfig,
                skip=()) -> np.ndarray:
    """Weighted sum in :data:`TERMS` order, optionally leaving terms out."""
    total = np.zeros_like(terms[TERMS[0]])
    for name in TERMS:
        if name not in skip:
            total = total + cfg.weights[name] * terms[name]
    return total


# --- single-step terms -------------------------------------------------------

def _term(name: str, obs, cmd, cfg) -> float:
    return float(batch_terms(_one(obs, cmd), cfg, (name,))[name][0])


def r_velocity(obs: Observation, cmd: Command, cfg: RewardConfig) -> tuple[float, float]:
    t = batch_terms(_one(obs, cmd), cfg, ("vel_x", "vel_y"))
    return float(t["vel_x"][0]), float(t["vel_y"][0])


def r_yaw(obs: Observation, cmd: Command, cfg: RewardConfig) -> float:
    return _term("yaw", obs, cmd, cfg)


def r_rollpitch(obs: Observation, cfg: RewardConfig) -> float:
    return _term("rollpitch", obs, STANDING, cfg)


def r_feet_contact(tracker: ContactTracker, cmd: Command, now: float,
                   grace: float = 0.2) -> float:
    if cmd.is_standing():
        return 1.0
    return 1.0 if now - tracker.last_single_contact_time <= grace + _GRACE_EPS else 0.0


def r_base_height(obs: Observation, cfg: RewardConfig) -> float:
    return _term("base_height", obs, STANDING, cfg)


def r_feet_airtime(tracker: ContactTracker, cmd: Command,
                   threshold: float = 0.4) -> float:
    if cmd.is_standing():
        return 1.0
    paid = np.where(tracker.touchdown, tracker.touchdown_airtime - threshold, 0.0)
    return float(paid.sum())


def r_feet_orientation(obs: Observation, cmd: Command, cfg: RewardConfig) -> float:
    return _term("feet_orientation", obs, cmd, cfg)


def r_feet_position(obs: Observation, cmd: Command, cfg: RewardConfig) -> float:
    return _term("feet_position", obs, cmd, cfg)


def r_arm(obs: Observation, cfg: RewardConfig) -> float:
    return _term("arm", obs, STANDING, cfg)


def r_base_accel(obs: Observation, cfg: RewardConfig | None = None) -> float:
    return _term("base_accel", obs, STANDING, cfg or RewardConfig())


def r_action_diff(obs: Observation, cfg: RewardConfig | None = None) -> float:
    return _term("action_diff", obs, STANDING, cfg or RewardConfig())


def r_torque(obs: Observation, cfg: RewardConfig) -> float:
    return _term("torque", obs, STANDING, cfg)


def reward_terms(obs: Observation, cmd: Command, tracker: ContactTracker,
                 cfg: RewardConfig) -> dict[str, float]:
    """Unweighted value of every term, keyed as in :data:`TERMS`."""
    t = batch_terms(_one(obs, cmd, tracker), cfg)
    return {k: float(v[0]) for k, v in t.items()}


def total_reward(obs: Observation, cmd: Command, tracker: ContactTracker,
                 cfg: RewardConfig) -> tuple[float, dict[str, float]]:
    """Weighted sum of all terms.

    The breakdown holds each weighted contribution plus ``"total"``; the
    contributions are summed in :data:`TERMS` order, so re-adding them in
    that order reproduces the total exactly.
    """
    return weigh(reward_terms(obs, cmd, tracker, cfg), cfg)


def weigh(terms: dict[str, float], cfg: RewardConfig) -> tuple[float, dict[str, float]]:
    """Apply the weights to raw term values; see :func:`total_reward`."""
    breakdown = {}
    total = 0.0
    for k in TERMS:
        v = cfg.weights[k] * terms[k]
        breakdown[k] = v
        total += v
    breakdown["total"] = total
    return total, breakdown
