"""Planar biped description and its compiled array form.

Generalized coordinates are ``[x, z, pitch, joints...]`` with joints ordered
``hip_l, knee_l, ankle_l, hip_r, knee_r, ankle_r[, shoulder_l, shoulder_r]``.
Angles are rotations about +y (positive pitch tips the torso forward,
positive hip swings the leg back, positive knee flexes).
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from sawlab.core import MirrorSpec
from sawlab.errors import InvalidArgument

LEG_JOINTS = ("hip", "knee", "ankle")


@dataclass
class RobotModel:
    """Desk-scale planar biped. Defaults total 32 kg with a 0.80 m base height.

    The values are stand-ins, not a model of any particular robot.
    """

    torso_mass: float = 19.0
    torso_inertia: float = 0.8
    torso_com: float = 0.25          # COM above the hip axis (m)
    torso_height: float = 0.50       # hip axis to top of torso (m)
    thigh_length: float = 0.38
    thigh_mass: float = 2.5
    shank_length: float = 0.38
    shank_mass: float = 1.5
    foot_mass: float = 1.0
    ankle_height: float = 0.06
    heel_length: float = 0.10
    toe_length: float = 0.15
    hip_width: float = 0.20          # lateral foot spacing used in observations
    with_arms: bool = True
    arm_length: float = 0.5
    arm_mass: float = 1.5
    shoulder_height: float = 0.45
    base_height: float = 0.80        # nominal standing base (hip) height
    push_height: float = 1.02        # push attachment height above ground at nominal stance
    kp: dict = field(default_factory=lambda: {"hip": 500.0, "knee": 500.0, "ankle": 300.0,
                                              "shoulder": 40.0})
    kd: dict = field(default_factory=lambda: {"hip": 40.0, "knee": 20.0, "ankle": 12.0,
                                              "shoulder": 1.0})
    t_max: dict = field(default_factory=lambda: {"hip": 120.0, "knee": 150.0, "ankle": 60.0,
                                                 "shoulder": 30.0})
    limits: dict = field(default_factory=lambda: {"hip": [-1.6, 1.0], "knee": [0.0, 2.4],
                                                  "ankle": [-0.9, 0.9],
                                                  "shoulder": [-2.5, 2.5]})
    joint_damping: float = 0.05
    limit_stiffness: float = 500.0
    limit_damping: float = 5.0

    def __post_init__(self):
        positive = ("torso_mass", "torso_inertia", "thigh_length", "thigh_mass", "shank_length",
                    "shank_mass", "foot_mass", "ankle_height", "heel_length", "toe_length",
                    "base_height", "arm_length", "arm_mass")
        for name in positive:
            if not getattr(self, name) > 0:
                raise InvalidArgument(f"model.{name} must be positive")
        for table in ("kp", "kd", "t_max"):
            for j in self.joint_kinds:
                if not self.__dict__[table].get(j, 0) > 0:
                    raise InvalidArgument(f"model.{table}[{j}] must be positive")
        reach = self.thigh_length + self.shank_length + self.ankle_height
        if not self.ankle_height < self.base_height < reach:
            raise InvalidArgument("base_height must be reachable with bent knees")

    @property
    def joint_kinds(self) -> tuple[str, ...]:
        kinds = LEG_JOINTS * 2
        return kinds + ("shoulder", "shoulder") if self.with_arms else kinds

    @property
    def joint_names(self) -> list[str]:
        names = [f"{j}_l" for j in LEG_JOINTS] + [f"{j}_r" for j in LEG_JOINTS]
        if self.with_arms:
            names += ["shoulder_l", "shoulder_r"]
        return names

    @property
    def n_act(self) -> int:
        return 8 if self.with_arms else 6

    @property
    def total_mass(self) -> float:
        m = self.torso_mass + 2 * (self.thigh_mass + self.shank_mass + self.foot_mass)
        return m + (2 * self.arm_mass if self.with_arms else 0.0)

    def gains(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        k = self.joint_kinds
        return (np.array([self.kp[j] for j in k]), np.array([self.kd[j] for j in k]),
                np.array([self.t_max[j] for j in k]))

    def joint_limits(self) -> tuple[np.ndarray, np.ndarray]:
        k = self.joint_kinds
        return (np.array([self.limits[j][0] for j in k]), np.array([self.limits[j][1] for j in k]))

    def leg_angles(self) -> tuple[float, float]:
        """Thigh and shank inclinations that put the ankle under the hip at
        the nominal base height (bisection on the thigh angle)."""
        l1, l2 = self.thigh_length, self.shank_length
        h = self.base_height - self.ankle_height
        lo, hi = 0.0, math.pi / 2
        for _ in range(200):
            a = 0.5 * (lo + hi)
            b = math.asin(min(1.0, l1 * math.sin(a) / l2))
            if l1 * math.cos(a) + l2 * math.cos(b) > h:
                lo = a
            else:
                hi = a
        a = 0.5 * (lo + hi)
        return a, math.asin(min(1.0, l1 * math.sin(a) / l2))

    def nominal_pose(self) -> np.ndarray:
        a, b = self.leg_angles()
        leg = [-a, a + b, -b]
        pose = leg + leg
        if self.with_arms:
            pose += [0.0, 0.0]
        return np.array(pose)

    def nominal_foot_pos(self) -> np.ndarray:
        """Ankle positions relative to the base in the heading frame, nominal stance."""
        dz = -(self.base_height - self.ankle_height)
        w = 0.5 * self.hip_width
        return np.array([[0.0, w, dz], [0.0, -w, dz]])

    def mirror_spec(self) -> MirrorSpec:
        perm = [3, 4, 5, 0, 1, 2] + ([7, 6] if self.with_arms else [])
        arm = [1, 0] if self.with_arms else []
        return MirrorSpec.for_layout(perm, np.ones(len(perm)), (), (), arm, np.ones(len(arm)))

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class CompiledModel:
    """Flat arrays consumed by the physics kernel."""

    parent: np.ndarray
    dof: np.ndarray
    anchor: np.ndarray
    com: np.ndarray
    mass: np.ndarray
    inertia: np.ndarray
    chain: np.ndarray
    cp_body: np.ndarray
    cp_local: np.ndarray
    foot_points: np.ndarray   # (2, 2) contact-point indices per foot
    kp: np.ndarray
    kd: np.ndarray
    t_max: np.ndarray
    q_lo: np.ndarray
    q_hi: np.ndarray
    push_body: int
    push_local: np.ndarray
    joint_damping: float
    limit_stiffness: float
    limit_damping: float
    ankle_body: np.ndarray    # foot body per side
    arm_dofs: np.ndarray

    @property
    def ndof(self) -> int:
        return len(self.kp) + 3


def _rod_inertia(m: float, l: float) -> float:
    return m * l * l / 12.0


def compile_model(model: RobotModel, mass_scale=None, gain_scale=None) -> CompiledModel:
    """Lay the tree out as arrays; ``mass_scale`` (per body) and ``gain_scale``
    (``(kp_scale, kd_scale)`` per joint) apply domain randomization."""
    l1, l2 = model.thigh_length, model.shank_length
    foot_len = model.heel_length + model.toe_length
    foot_com = (0.5 * (model.toe_length - model.heel_length), -0.5 * model.ankle_height)
    bodies = [  # (parent, dof, anchor, com, mass, inertia)
        (-1, 2, (0.0, 0.0), (0.0, model.torso_com), model.torso_mass, model.torso_inertia),
    ]
    for side in range(2):
        d0 = 3 + 3 * side
        thigh = len(bodies)
        bodies.append((0, d0, (0.0, 0.0), (0.0, -0.5 * l1), model.thigh_mass,
                       _rod_inertia(model.thigh_mass, l1)))
        bodies.append((thigh, d0 + 1, (0.0, -l1), (0.0, -0.5 * l2), model.shank_mass,
                       _rod_inertia(model.shank_mass, l2)))
        bodies.append((thigh + 1, d0 + 2, (0.0, -l2), foot_com, model.foot_mass,
                       _rod_inertia(model.foot_mass, foot_len)))
    arm_dofs = []
    if model.with_arms:
        for side in range(2):
            arm_dofs.append(9 + side)
            bodies.append((0, 9 + side, (0.0, model.shoulder_height),
                           (0.0, -0.5 * model.arm_length), model.arm_mass,
                           _rod_inertia(model.arm_mass, model.arm_length)))
    nb = len(bodies)
    ndof = 3 + model.n_act
    parent = np.array([b[0] for b in bodies], dtype=np.int64)
    dof = np.array([b[1] for b in bodies], dtype=np.int64)
    anchor = np.array([b[2] for b in bodies], dtype=float)
    com = np.array([b[3] for b in bodies], dtype=float)
    mass = np.array([b[4] for b in bodies], dtype=float)
    inertia = np.array([b[5] for b in bodies], dtype=float)
    if mass_scale is not None:
        s = np.asarray(mass_scale, dtype=float)
        if s.shape != (nb,):
            raise InvalidArgument(f"mass_scale must have {nb} entries")
        mass = mass * s
        inertia = inertia * s
    chain = np.zeros((nb, ndof))
    for b in range(nb):
        a = b
        while a >= 0:
            chain[b, dof[a]] = 1.0
            a = parent[a]

    feet = (3, 6)
    cps = []
    foot_points = []
    for fb in feet:
        foot_points.append([len(cps), len(cps) + 1])
        cps.append((fb, (-model.heel_length, -model.ankle_height)))
        cps.append((fb, (model.toe_length, -model.ankle_height)))
    for knee_body in (2, 5):
        cps.append((knee_body, (0.0, 0.0)))
    cps.append((0, (0.0, 0.0)))
    cps.append((0, (0.0, model.torso_height)))
    if model.with_arms:
        for ab in (7, 8):
            cps.append((ab, (0.0, -model.arm_length)))

    kp, kd, tmax = model.gains()
    if gain_scale is not None:
        kp = kp * np.asarray(gain_scale[0], dtype=float)
        kd = kd * np.asarray(gain_scale[1], dtype=float)
    lo, hi = model.joint_limits()
    return CompiledModel(
        parent=parent, dof=dof, anchor=anchor, com=com, mass=mass, inertia=inertia,
        chain=chain,
        cp_body=np.array([c[0] for c in cps], dtype=np.int64),
        cp_local=np.array([c[1] for c in cps], dtype=float),
        foot_points=np.array(foot_points, dtype=np.int64),
        kp=kp, kd=kd, t_max=tmax, q_lo=lo, q_hi=hi,
        push_body=0,
        push_local=np.array([0.0, model.push_height - model.base_height]),
        joint_damping=model.joint_damping,
        limit_stiffness=model.limit_stiffness,
        limit_damping=model.limit_damping,
        ankle_body=np.array(feet, dtype=np.int64),
        arm_dofs=np.array(arm_dofs, dtype=np.int64),
    )
