"""Unit quaternions: only the operations the reward terms need.

Convention: ``(w, x, y, z)`` with Hamilton product, body axes x forward,
y left, z up. Euler angles are intrinsic z-y-x (yaw, pitch, roll).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from sawlab.errors import InvalidArgument

UNIT_TOL = 1e-6


@dataclass(frozen=True)
class UnitQuaternion:
    w: float = 1.0
    x: float = 0.0
    y: float = 0.0
    z: float = 0.0

    @classmethod
    def identity(cls) -> UnitQuaternion:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> UnitQuaternion:
        return cls(float(a[0]), float(a[1]), float(a[2]), float(a[3]))

    @classmethod
    def from_yaw(cls, yaw: float) -> UnitQuaternion:
        return cls(math.cos(0.5 * yaw), 0.0, 0.0, math.sin(0.5 * yaw))

    @classmethod
    def from_pitch(cls, pitch: float) -> UnitQuaternion:
        return cls(math.cos(0.5 * pitch), 0.0, math.sin(0.5 * pitch), 0.0)

    @classmethod
    def from_roll(cls, roll: float) -> UnitQuaternion:
        return cls(math.cos(0.5 * roll), math.sin(0.5 * roll), 0.0, 0.0)

    @classmethod
    def from_euler(cls, roll: float, pitch: float, yaw: float) -> UnitQuaternion:
        return cls.from_yaw(yaw) * cls.from_pitch(pitch) * cls.from_roll(roll)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z])

    def norm(self) -> float:
        return math.sqrt(self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z)

    def normalize(self) -> UnitQuaternion:
        n = self.norm()
        if n == 0.0 or not math.isfinite(n):
            raise InvalidArgument(f"cannot normalize quaternion with norm {n}")
        return UnitQuaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> UnitQuaternion:
        return UnitQuaternion(self.w, -self.x, -self.y, -self.z)

    def dot(self, other: UnitQuaternion) -> float:
        return self.w * other.w + self.x * other.x + self.y * other.y + self.z * other.z

    def __mul__(self, o: UnitQuaternion) -> UnitQuaternion:
        return UnitQuaternion(
            self.w * o.w - self.x * o.x - self.y * o.y - self.z * o.z,
            self.w * o.x + self.x * o.w + self.y * o.z - self.z * o.y,
            self.w * o.y - self.x * o.z + self.y * o.w + self.z * o.x,
            self.w * o.z + self.x * o.y - self.y * o.x + self.z * o.w,
        )

    def __neg__(self) -> UnitQuaternion:
        return UnitQuaternion(-self.w, -self.x, -self.y, -self.z)

    def yaw(self) -> float:
        return math.atan2(
            2.0 * (self.w * self.z + self.x * self.y),
            1.0 - 2.0 * (self.y * self.y + self.z * self.z),
        )

    def to_euler(self) -> tuple[float, float, float]:
        """Return ``(roll, pitch, yaw)``."""
        w, x, y, z = self.w, self.x, self.y, self.z
        roll = math.atan2(2.0 * (w * x + y * z), 1.0 - 2.0 * (x * x + y * y))
        s = max(-1.0, min(1.0, 2.0 * (w * y - z * x)))
        pitch = math.asin(s)
        return roll, pitch, self.yaw()

    def mirrored(self) -> UnitQuaternion:
        """Reflection through the sagittal (x-z) plane: roll and yaw flip sign."""
        return UnitQuaternion(self.w, -self.x, self.y, -self.z)

    def rotate(self, v) -> np.ndarray:
        p = UnitQuaternion(0.0, float(v[0]), float(v[1]), float(v[2]))
        r = self * p * self.conjugate()
        return np.array([r.x, r.y, r.z])


def _check_unit(q: UnitQuaternion, name: str) -> None:
    n = q.norm()
    if not abs(n - 1.0) <= UNIT_TOL:
        raise InvalidArgument(f"{name} is not unit-norm (|q| = {n!r})")


def qd(a: UnitQuaternion, b: UnitQuaternion) -> float:
    """Quaternion distance ``1 - <a, b>^2``: 0 iff a = +-b, at most 1.

    Evaluated through Lagrange's identity as the sum of squared 2x2 minors
    ``(a_i b_j - a_j b_i)^2``, which is exactly zero for ``a = +-b`` and free
    of cancellation for nearby rotations.
    """
    _check_unit(a, "a")
    _check_unit(b, "b")
    u, v = a.as_array(), b.as_array()
    m = np.outer(u, v)
    return min(1.0, float(np.sum(np.triu(m - m.T, 1) ** 2)))


def split_yaw(q: UnitQuaternion) -> tuple[UnitQuaternion, UnitQuaternion]:
    """Decompose ``q = yaw * rollpitch`` with a pure-yaw left factor."""
    qy = UnitQuaternion.from_yaw(q.yaw())
    return qy, qy.conjugate() * q


def wrap_angle(a: float) -> float:
    """Wrap to (-pi, pi]."""
    w = math.remainder(a, 2.0 * math.pi)
    if w <= -math.pi:
        w += 2.0 * math.pi
    return w
