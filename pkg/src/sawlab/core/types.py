"""Commands, observations, and the left/right mirror operators."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field

import numpy as np

from sawlab.core.quaternion import UnitQuaternion, wrap_angle
from sawlab.errors import InvalidArgument


@dataclass(frozen=True)
class Command:
    """User command: heading-frame velocities plus an integrated heading target."""

    c_x: float = 0.0
    c_y: float = 0.0
    c_yaw: float = 0.0
    heading_ref: float = 0.0

    def __post_init__(self):
        for name in ("c_x", "c_y", "c_yaw", "heading_ref"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise InvalidArgument(f"command field {name} is not finite: {v!r}")
            object.__setattr__(self, name, float(v))
        object.__setattr__(self, "heading_ref", wrap_angle(self.heading_ref))

    def is_standing(self) -> bool:
        return self.c_x == 0.0 and self.c_y == 0.0 and self.c_yaw == 0.0

    def velocity(self) -> np.ndarray:
        return np.array([self.c_x, self.c_y, self.c_yaw])

    def advance(self, dt: float) -> Command:
        """Integrate the yaw rate into the heading target over one period."""
        if self.c_yaw == 0.0:
            return self
        return dataclasses.replace(self, heading_ref=self.heading_ref + self.c_yaw * dt)

    def mirrored(self) -> Command:
        return Command(self.c_x, -self.c_y, -self.c_yaw, -self.heading_ref)

    def to_list(self) -> list[float]:
        return [self.c_x, self.c_y, self.c_yaw, self.heading_ref]

    @classmethod
    def from_list(cls, v) -> Command:
        return cls(*[float(x) for x in v])


STANDING = Command()


def _arr(x, dtype=float) -> np.ndarray:
    a = np.array(x, dtype=dtype)
    a.setflags(write=False)
    return a


_FLOAT_FIELDS = (
    "motor_pos", "motor_vel", "joint_pos", "joint_vel", "base_pos", "base_linvel",
    "base_acc", "foot_pos", "foot_orientation", "airtime", "arm_pos",
    "applied_torque", "prev_action", "action",
)
_BOOL_FIELDS = ("contact", "touchdown")


@dataclass(frozen=True, eq=False)
class Observation:
    """Generalized robot state at one control step.

    Linear quantities (``base_linvel``, ``base_acc``, ``foot_pos``) are in the
    gravity-aligned heading frame of the torso; ``base_pos`` is world-frame.
    ``foot_pos`` and ``foot_orientation`` are ``(2, 3)`` with row 0 = left.
    """

    motor_pos: np.ndarray
    motor_vel: np.ndarray
    torso_orientation: UnitQuaternion = field(default_factory=UnitQuaternion.identity)
    joint_pos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    joint_vel: np.ndarray = field(default_factory=lambda: np.zeros(0))
    base_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_linvel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    base_acc: np.ndarray = field(default_factory=lambda: np.zeros(3))
    foot_pos: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    foot_orientation: np.ndarray = field(default_factory=lambda: np.zeros((2, 3)))
    contact: np.ndarray = field(default_factory=lambda: np.ones(2, dtype=bool))
    airtime: np.ndarray = field(default_factory=lambda: np.zeros(2))
    touchdown: np.ndarray = field(default_factory=lambda: np.zeros(2, dtype=bool))
    arm_pos: np.ndarray = field(default_factory=lambda: np.zeros(0))
    applied_torque: np.ndarray | None = None
    prev_action: np.ndarray | None = None
    action: np.ndarray | None = None
    time: float = 0.0

    def __post_init__(self):
        n = len(self.motor_pos)
        for name in ("applied_torque", "prev_action", "action"):
            if getattr(self, name) is None:
                object.__setattr__(self, name, np.zeros(n))
        for name in _FLOAT_FIELDS:
            object.__setattr__(self, name, _arr(getattr(self, name), float))
        for name in _BOOL_FIELDS:
            object.__setattr__(self, name, _arr(getattr(self, name), bool))
        object.__setattr__(self, "time", float(self.time))
        if self.foot_pos.shape != (2, 3) or self.foot_orientation.shape != (2, 3):
            raise InvalidArgument("foot_pos and foot_orientation must have shape (2, 3)")
        if self.contact.shape != (2,) or self.touchdown.shape != (2,) or self.airtime.shape != (2,):
            raise InvalidArgument("contact, touchdown and airtime must have shape (2,)")
        for name in ("motor_vel", "applied_torque", "prev_action", "action"):
            if len(getattr(self, name)) != n:
                raise InvalidArgument(f"{name} length {len(getattr(self, name))} != motor count {n}")
        if len(self.joint_pos) != len(self.joint_vel):
            raise InvalidArgument("joint_pos and joint_vel lengths differ")

    def __eq__(self, other) -> bool:
        if not isinstance(other, Observation):
            return NotImplemented
        if self.time != other.time or self.torso_orientation != other.torso_orientation:
            return False
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in _FLOAT_FIELDS + _BOOL_FIELDS
        )

    __hash__ = None

    def replace(self, **changes) -> Observation:
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k).tolist() for k in _FLOAT_FIELDS + _BOOL_FIELDS}
        q = self.torso_orientation
        d["torso_orientation"] = [q.w, q.x, q.y, q.z]
        d["time"] = self.time
        return d

    @classmethod
    def from_dict(cls, d: dict) -> Observation:
        """Inverse of :meth:`to_dict`. Only ``motor_pos`` and ``time`` are
        required; absent channels take their defaults (imported logs)."""
        kw = {k: np.asarray(d[k], dtype=float) for k in _FLOAT_FIELDS if k in d}
        if "motor_pos" not in kw or "time" not in d:
            raise KeyError("motor_pos" if "motor_pos" not in kw else "time")
        kw.setdefault("motor_vel", np.zeros(len(kw["motor_pos"])))
        for k in ("foot_pos", "foot_orientation"):
            if k in kw:
                kw[k] = kw[k].reshape(2, 3)
        for k in _BOOL_FIELDS:
            if k in d:
                kw[k] = np.asarray(d[k], dtype=bool)
        if "torso_orientation" in d:
            kw["torso_orientation"] = UnitQuaternion.from_array(d["torso_orientation"])
        kw["time"] = d["time"]
        return cls(**kw)


def _check_involution(perm: np.ndarray, signs: np.ndarray, name: str) -> None:
    if perm.shape != signs.shape:
        raise InvalidArgument(f"{name}: permutation and signs differ in length")
    n = len(perm)
    if n and (sorted(perm.tolist()) != list(range(n))):
        raise InvalidArgument(f"{name}: not a permutation")
    if n and not np.array_equal(perm[perm], np.arange(n)):
        raise InvalidArgument(f"{name}: permutation is not an involution")
    if not np.all(np.abs(signs) == 1.0):
        raise InvalidArgument(f"{name}: signs must be +-1")
    if n and not np.array_equal(signs[perm], signs):
        raise InvalidArgument(f"{name}: signs not consistent with permutation")


@dataclass(frozen=True, eq=False)
class MirrorSpec:
    """Sign flips and left/right index swaps for features, actions, joints, arms.

    Each map is ``v' = signs * v[perm]``; both are validated to be involutions
    so mirroring twice is bitwise identity.
    """

    obs_permutation: np.ndarray
    obs_signs: np.ndarray
    act_permutation: np.ndarray
    act_signs: np.ndarray
    joint_permutation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    joint_signs: np.ndarray = field(default_factory=lambda: np.zeros(0))
    arm_permutation: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    arm_signs: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __post_init__(self):
        for pname, sname in (
            ("obs_permutation", "obs_signs"),
            ("act_permutation", "act_signs"),
            ("joint_permutation", "joint_signs"),
            ("arm_permutation", "arm_signs"),
        ):
            p = np.asarray(getattr(self, pname), dtype=np.int64)
            s = np.asarray(getattr(self, sname), dtype=float)
            _check_involution(p, s, pname)
            p.setflags(write=False)
            s.setflags(write=False)
            object.__setattr__(self, pname, p)
            object.__setattr__(self, sname, s)

    @classmethod
    def for_layout(cls, act_permutation, act_signs, joint_permutation=(), joint_signs=(),
                   arm_permutation=(), arm_signs=()) -> MirrorSpec:
        """Build the feature-vector map for the standard layout produced by
        :func:`observation_features`: motor pos, motor vel, joint pos,
        joint vel, relative torso quaternion."""
        ap = np.asarray(act_permutation, dtype=np.int64)
        asg = np.asarray(act_signs, dtype=float)
        jp = np.asarray(joint_permutation, dtype=np.int64)
        jsg = np.asarray(joint_signs, dtype=float)
        na, nj = len(ap), len(jp)
        perm = np.concatenate([ap, ap + na, jp + 2 * na, jp + 2 * na + nj,
                               np.arange(4) + 2 * na + 2 * nj])
        signs = np.concatenate([asg, asg, jsg, jsg, [1.0, -1.0, 1.0, -1.0]])
        return cls(perm, signs, ap, asg, jp, jsg,
                   np.asarray(arm_permutation, dtype=np.int64), np.asarray(arm_signs, dtype=float))

    _FIELDS = ("obs_permutation", "obs_signs", "act_permutation", "act_signs",
               "joint_permutation", "joint_signs", "arm_permutation", "arm_signs")

    def to_dict(self) -> dict:
        return {k: getattr(self, k).tolist() for k in self._FIELDS}

    @classmethod
    def from_dict(cls, d: dict) -> MirrorSpec:
        return cls(*(np.asarray(d[k]) for k in cls._FIELDS))

    def __eq__(self, other) -> bool:
        if not isinstance(other, MirrorSpec):
            return NotImplemented
        return all(np.array_equal(getattr(self, k), getattr(other, k)) for k in self._FIELDS)

    __hash__ = None

    @property
    def obs_dim(self) -> int:
        return len(self.obs_permutation)

    @property
    def act_dim(self) -> int:
        return len(self.act_permutation)


def _apply(v: np.ndarray, perm: np.ndarray, signs: np.ndarray, what: str) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != len(perm):
        raise InvalidArgument(f"{what}: expected last dimension {len(perm)}, got {v.shape[-1]}")
    return signs * v[..., perm]


def mirror_features(v: np.ndarray, m: MirrorSpec) -> np.ndarray:
    return _apply(v, m.obs_permutation, m.obs_signs, "features")


def mirror_act(a: np.ndarray, m: MirrorSpec) -> np.ndarray:
    return _apply(a, m.act_permutation, m.act_signs, "action")


_LATERAL = np.array([1.0, -1.0, 1.0])
_RPY_MIRROR = np.array([-1.0, 1.0, -1.0])


def mirror_obs(o: Observation, m: MirrorSpec) -> Observation:
    """Mirror an observation through the sagittal plane.

    Left/right foot rows swap, lateral components negate, roll and yaw flip.
    """
    return Observation(
        motor_pos=mirror_act(o.motor_pos, m),
        motor_vel=mirror_act(o.motor_vel, m),
        torso_orientation=o.torso_orientation.mirrored(),
        joint_pos=_apply(o.joint_pos, m.joint_permutation, m.joint_signs, "joint_pos"),
        joint_vel=_apply(o.joint_vel, m.joint_permutation, m.joint_signs, "joint_vel"),
        base_pos=o.base_pos * _LATERAL,
        base_linvel=o.base_linvel * _LATERAL,
        base_acc=o.base_acc * _LATERAL,
        foot_pos=o.foot_pos[::-1] * _LATERAL,
        foot_orientation=o.foot_orientation[::-1] * _RPY_MIRROR,
        contact=o.contact[::-1],
        airtime=o.airtime[::-1],
        touchdown=o.touchdown[::-1],
        arm_pos=_apply(o.arm_pos, m.arm_permutation, m.arm_signs, "arm_pos"),
        applied_torque=mirror_act(o.applied_torque, m),
        prev_action=mirror_act(o.prev_action, m),
        action=mirror_act(o.action, m),
        time=o.time,
    )


def observation_features(o: Observation, heading_ref: float = 0.0) -> np.ndarray:
    """Policy-input features: motor and joint state plus the torso orientation
    expressed relative to the commanded heading."""
    q = UnitQuaternion.from_yaw(heading_ref).conjugate() * o.torso_orientation
    return np.concatenate([o.motor_pos, o.motor_vel, o.joint_pos, o.joint_vel,
                           [q.w, q.x, q.y, q.z]])
