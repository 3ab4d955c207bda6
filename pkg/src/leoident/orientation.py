"""Dish attitude math.

Conventions used throughout the package:

* The local level frame is NED (north, east, down).
* A quaternion ``q`` maps body-frame vectors into NED: ``v_ned = R(q) @ v_body``.
* Euler angles are Z-Y-X intrinsic (yaw, pitch, roll): ``R = Rz(yaw) Ry(pitch) Rx(roll)``.
* Dish body axes: +Z is the boresight (panel normal), +Y runs from the panel
  centre to the panel top, +X completes the right-handed set.

With the identity quaternion the body axes coincide with NED, so body +Y points
east and the Y heading is 90 degrees; that constant is ``MOUNTING_OFFSET_DEG``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Protocol

import numpy as np

from leoident.errors import UndefinedHeadingError

MOUNTING_OFFSET_DEG = 90.0
LOW_TILT_DEG = 15.0
GIMBAL_GUARD_DEG = 89.9
_VERTICAL_GUARD = math.sin(math.radians(0.1))
# z-component of rotated +Y at or below this counts as "pitched up" (NED z is down).
_PITCH_UP_EPS = 1e-9


def wrap360(angle_deg: float) -> float:
    r = angle_deg % 360.0
    return 0.0 if r >= 360.0 else r


def wrap180(angle_deg: float) -> float:
    """Wrap to (-180, 180]."""
    r = wrap360(angle_deg)
    return r - 360.0 if r > 180.0 else r


@dataclass(frozen=True)
class Quaternion:
    w: float
    x: float
    y: float
    z: float

    @classmethod
    def identity(cls) -> Quaternion:
        return cls(1.0, 0.0, 0.0, 0.0)

    @classmethod
    def from_array(cls, a) -> Quaternion:
        w, x, y, z = (float(v) for v in a)
        return cls(w, x, y, z)

    def as_array(self) -> np.ndarray:
        return np.array([self.w, self.x, self.y, self.z], dtype=float)

    def norm(self) -> float:
        return math.sqrt(self.w**2 + self.x**2 + self.y**2 + self.z**2)

    def normalized(self) -> Quaternion:
        n = self.norm()
        if n < 1e-12:
            raise ValueError("cannot normalize a zero quaternion")
        return Quaternion(self.w / n, self.x / n, self.y / n, self.z / n)

    def conjugate(self) -> Quaternion:
        return Quaternion(self.w, -self.x, -self.y, -self.z)

    def __mul__(self, other: Quaternion) -> Quaternion:
        w1, x1, y1, z1 = self.w, self.x, self.y, self.z
        w2, x2, y2, z2 = other.w, other.x, other.y, other.z
        return Quaternion(
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        )

    def to_matrix(self) -> np.ndarray:
        """Body-to-NED rotation matrix."""
        w, x, y, z = self.normalized().as_array()
        return np.array(
            [
                [w * w + x * x - y * y - z * z, 2 * (x * y - w * z), 2 * (x * z + w * y)],
                [2 * (x * y + w * z), w * w - x * x + y * y - z * z, 2 * (y * z - w * x)],
                [2 * (x * z - w * y), 2 * (y * z + w * x), w * w - x * x - y * y + z * z],
            ]
        )

    @classmethod
    def from_matrix(cls, m: np.ndarray) -> Quaternion:
        """Shepperd's method; returns the representative with w >= 0."""
        m = np.asarray(m, dtype=float)
        tr = m[0, 0] + m[1, 1] + m[2, 2]
        if tr > 0:
            s = 2.0 * math.sqrt(1.0 + tr)
            w = 0.25 * s
            x = (m[2, 1] - m[1, 2]) / s
            y = (m[0, 2] - m[2, 0]) / s
            z = (m[1, 0] - m[0, 1]) / s
        elif m[0, 0] > m[1, 1] and m[0, 0] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[0, 0] - m[1, 1] - m[2, 2])
            w = (m[2, 1] - m[1, 2]) / s
            x = 0.25 * s
            y = (m[0, 1] + m[1, 0]) / s
            z = (m[0, 2] + m[2, 0]) / s
        elif m[1, 1] > m[2, 2]:
            s = 2.0 * math.sqrt(1.0 + m[1, 1] - m[0, 0] - m[2, 2])
            w = (m[0, 2] - m[2, 0]) / s
            x = (m[0, 1] + m[1, 0]) / s
            y = 0.25 * s
            z = (m[1, 2] + m[2, 1]) / s
        else:
            s = 2.0 * math.sqrt(1.0 + m[2, 2] - m[0, 0] - m[1, 1])
            w = (m[1, 0] - m[0, 1]) / s
            x = (m[0, 2] + m[2, 0]) / s
            y = (m[1, 2] + m[2, 1]) / s
            z = 0.25 * s
        q = cls(float(w), float(x), float(y), float(z)).normalized()
        if q.w < 0:
            q = Quaternion(-q.w, -q.x, -q.y, -q.z)
        return q

    @classmethod
    def from_euler(cls, yaw_deg: float, pitch_deg: float, roll_deg: float) -> Quaternion:
        """Z-Y-X intrinsic construction, the inverse of :func:`to_tait_bryan`."""
        hy, hp, hr = (math.radians(a) / 2.0 for a in (yaw_deg, pitch_deg, roll_deg))
        cy, sy = math.cos(hy), math.sin(hy)
        cp, sp = math.cos(hp), math.sin(hp)
        cr, sr = math.cos(hr), math.sin(hr)
        return cls(
            cr * cp * cy + sr * sp * sy,
            sr * cp * cy - cr * sp * sy,
            cr * sp * cy + sr * cp * sy,
            cr * cp * sy - sr * sp * cy,
        )

    def rotate(self, v) -> np.ndarray:
        return self.to_matrix() @ np.asarray(v, dtype=float)


def slerp(q0: Quaternion, q1: Quaternion, frac: float) -> Quaternion:
    a = q0.normalized().as_array()
    b = q1.normalized().as_array()
    dot = float(np.dot(a, b))
    if dot < 0.0:
        b = -b
        dot = -dot
    if dot > 0.9995:
        out = a + frac * (b - a)
        return Quaternion.from_array(out / np.linalg.norm(out))
    theta = math.acos(min(dot, 1.0))
    s = math.sin(theta)
    out = (math.sin((1.0 - frac) * theta) * a + math.sin(frac * theta) * b) / s
    return Quaternion.from_array(out)


class TaitBryan(NamedTuple):
    yaw_deg: float
    pitch_deg: float
    roll_deg: float
    gimbal_adjacent: bool


def to_tait_bryan(q: Quaternion) -> TaitBryan:
    m = q.normalized().to_matrix()
    pitch = math.degrees(math.asin(max(-1.0, min(1.0, -m[2, 0]))))
    gimbal = abs(pitch) > GIMBAL_GUARD_DEG
    if gimbal:
        # yaw and roll are coupled here; pin roll to zero so the output is at least well defined
        yaw = math.degrees(math.atan2(-m[0, 1], m[1, 1]))
        roll = 0.0
    else:
        yaw = math.degrees(math.atan2(m[1, 0], m[0, 0]))
        roll = math.degrees(math.atan2(m[2, 1], m[2, 2]))
    return TaitBryan(yaw, pitch, roll, gimbal)


def _y_axis_ned(q: Quaternion) -> np.ndarray:
    return q.normalized().to_matrix()[:, 1]


def y_heading(q: Quaternion) -> float:
    """Bearing of the ground projection of body +Y, clockwise from true north."""
    y = _y_axis_ned(q)
    if math.hypot(y[0], y[1]) < _VERTICAL_GUARD:
        raise UndefinedHeadingError("body +Y axis is within 0.1 deg of vertical")
    return wrap360(math.degrees(math.atan2(y[1], y[0])))


def y_pitched_up(q: Quaternion) -> bool:
    return bool(_y_axis_ned(q)[2] <= _PITCH_UP_EPS)


def compensate(delta_deg: float, pitched_up: bool) -> float:
    return wrap360(delta_deg + 180.0) if pitched_up else wrap360(delta_deg)


def compensated_heading(q: Quaternion) -> float:
    return compensate(y_heading(q), y_pitched_up(q))


def pose_matrix(heading_deg: float, tilt_deg: float) -> np.ndarray:
    """Body-to-NED matrix of a dish leaning toward ``heading_deg`` by ``tilt_deg``.

    The boresight sits ``tilt_deg`` off zenith toward the heading and the panel
    top (+Y) is the up-slope direction, so +Y projects opposite the heading.
    """
    h, t = math.radians(heading_deg), math.radians(tilt_deg)
    up = np.array([0.0, 0.0, -1.0])
    fwd = np.array([math.cos(h), math.sin(h), 0.0])
    z = math.cos(t) * up + math.sin(t) * fwd
    y = math.sin(t) * up - math.cos(t) * fwd
    x = np.cross(y, z)
    return np.column_stack([x, y, z])


def pose_quaternion(heading_deg: float, tilt_deg: float) -> Quaternion:
    return Quaternion.from_matrix(pose_matrix(heading_deg, tilt_deg))


class StatusLike(Protocol):
    quaternion: tuple[float, float, float, float] | None
    degraded: bool
    tilt_deg: float | None
    boresight_azimuth_deg: float | None


@dataclass(frozen=True)
class HeadingEstimate:
    heading_deg: float
    source: str  # "quaternion" or "boresight_azimuth"
    low_confidence: bool = False


def _valid_quaternion(status: StatusLike) -> Quaternion | None:
    if status.quaternion is None or status.degraded:
        return None
    q = Quaternion.from_array(status.quaternion)
    if q.norm() < 1e-12:
        return None
    return q.normalized()


def effective_heading(status: StatusLike) -> HeadingEstimate:
    q = _valid_quaternion(status)
    if q is not None:
        return HeadingEstimate(compensated_heading(q), "quaternion")
    if status.boresight_azimuth_deg is None:
        raise ValueError("status record has neither a usable quaternion nor a boresight azimuth")
    tilt = status.tilt_deg if status.tilt_deg is not None else 0.0
    return HeadingEstimate(
        wrap360(status.boresight_azimuth_deg), "boresight_azimuth", low_confidence=tilt < LOW_TILT_DEG
    )


@dataclass(frozen=True)
class Attitude:
    yaw_deg: float
    pitch_deg: float
    roll_deg: float
    tilt_deg: float
    boresight_azimuth_deg: float
    y_heading_deg: float
    compensated_heading_deg: float
    quaternion: Quaternion
    low_confidence: bool = False
    matrix: np.ndarray = field(repr=False, compare=False, default=None)  # type: ignore[assignment]

    @classmethod
    def from_quaternion(cls, q: Quaternion, low_confidence: bool = False) -> Attitude:
        q = q.normalized()
        m = q.to_matrix()
        yaw, pitch, roll, _ = to_tait_bryan(q)
        z = m[:, 2]
        tilt = math.degrees(math.acos(max(-1.0, min(1.0, -z[2]))))
        if math.hypot(z[0], z[1]) < 1e-12:
            phi = 0.0
        else:
            phi = wrap360(math.degrees(math.atan2(z[1], z[0])))
        delta = y_heading(q)
        return cls(
            yaw_deg=yaw,
            pitch_deg=pitch,
            roll_deg=roll,
            tilt_deg=tilt,
            boresight_azimuth_deg=phi,
            y_heading_deg=delta,
            compensated_heading_deg=compensate(delta, y_pitched_up(q)),
            quaternion=q,
            low_confidence=low_confidence,
            matrix=m,
        )

    @classmethod
    def from_pose(cls, heading_deg: float, tilt_deg: float, low_confidence: bool = False) -> Attitude:
        return cls.from_quaternion(pose_quaternion(heading_deg, tilt_deg), low_confidence)

    @property
    def heading_deg(self) -> float:
        """The heading used for frame compensation and the FOV cone."""
        return self.compensated_heading_deg

    def boresight_ned(self) -> np.ndarray:
        """Boresight unit vector rebuilt from tilt and effective heading."""
        h, t = math.radians(self.heading_deg), math.radians(self.tilt_deg)
        return np.array([math.sin(t) * math.cos(h), math.sin(t) * math.sin(h), -math.cos(t)])


def attitude_from_status(status: StatusLike) -> Attitude:
    q = _valid_quaternion(status)
    if q is not None:
        return Attitude.from_quaternion(q)
    est = effective_heading(status)
    tilt = status.tilt_deg if status.tilt_deg is not None else 0.0
    return Attitude.from_pose(est.heading_deg, tilt, low_confidence=est.low_confidence)
