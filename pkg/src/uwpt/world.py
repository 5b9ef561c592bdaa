"""Poses, kinematics and transmitter/receiver geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Sequence

import numpy as np

from uwpt.errors import DegenerateGeometryError, DomainError
from uwpt.linkmodels import LinkGeometry

_UNIT_TOL = 1e-9


def _vec3(value, name) -> np.ndarray:
    arr = np.array(value, dtype=float)
    if arr.shape != (3,) or not np.all(np.isfinite(arr)):
        raise DomainError(f"{name} must be a finite 3-vector, got {value!r}")
    arr.flags.writeable = False
    return arr


def _angle_between(a: np.ndarray, b: np.ndarray) -> float:
    # atan2 form stays accurate near 0 and pi where arccos loses digits
    return math.atan2(float(np.linalg.norm(np.cross(a, b))), float(np.dot(a, b)))


@dataclass(frozen=True, eq=False)
class Pose:
    """Position, velocity and unit boresight of an agent."""

    position: np.ndarray
    velocity: np.ndarray = (0.0, 0.0, 0.0)
    boresight: np.ndarray = (1.0, 0.0, 0.0)

    def __post_init__(self):
        object.__setattr__(self, "position", _vec3(self.position, "position"))
        object.__setattr__(self, "velocity", _vec3(self.velocity, "velocity"))
        b = _vec3(self.boresight, "boresight")
        if abs(np.linalg.norm(b) - 1.0) > _UNIT_TOL:
            raise DomainError(f"boresight must have unit norm, got |b| = {np.linalg.norm(b)!r}")
        object.__setattr__(self, "boresight", b)

    @property
    def speed(self) -> float:
        return float(np.linalg.norm(self.velocity))


@dataclass(frozen=True, eq=False)
class Obstacle:
    """Sphere that blocks line of sight."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        object.__setattr__(self, "center", _vec3(self.center, "center"))
        if not (self.radius > 0):
            raise DomainError(f"obstacle radius must be positive, got {self.radius!r}")


@dataclass(frozen=True)
class SafetyPolicy:
    """Constant-headway safe distance: ``base_distance + time_headway * speed``."""

    base_distance: float = 2.0
    time_headway: float = 1.5

    def __post_init__(self):
        if self.base_distance < 0 or self.time_headway < 0:
            raise DomainError("safety policy terms must be non-negative")


def segment_hits_sphere(a: np.ndarray, b: np.ndarray, obstacle: Obstacle) -> bool:
    """True if the closed segment a-b passes strictly inside the sphere."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    # canonical endpoint order makes the result exactly symmetric
    if tuple(b) < tuple(a):
        a, b = b, a
    ab = b - a
    length2 = float(np.dot(ab, ab))
    t = 0.0 if length2 == 0.0 else float(np.dot(obstacle.center - a, ab)) / length2
    t = min(1.0, max(0.0, t))
    closest = a + t * ab
    return float(np.linalg.norm(obstacle.center - closest)) < obstacle.radius


def line_of_sight(a, b, obstacles: Iterable[Obstacle] = ()) -> bool:
    return not any(segment_hits_sphere(a, b, ob) for ob in obstacles)


def link_geometry(tx: Pose, rx: Pose, obstacles: Sequence[Obstacle] = ()) -> LinkGeometry:
    """Distance, pointing angles and line-of-sight state between two poses.

    Raises:
        DegenerateGeometryError: if the two positions coincide.
    """
    delta = rx.position - tx.position
    d = float(np.linalg.norm(delta))
    if d == 0.0:
        raise DegenerateGeometryError("transmitter and receiver positions coincide")
    return LinkGeometry(
        distance=d,
        incidence_angle=_angle_between(rx.boresight, -delta),
        irradiance_angle=_angle_between(tx.boresight, delta),
        los_clear=line_of_sight(tx.position, rx.position, obstacles),
    )


def _rotate_toward(b: np.ndarray, target: np.ndarray, angle: float) -> np.ndarray:
    axis = np.cross(b, target)
    n = np.linalg.norm(axis)
    if n < 1e-15:
        # antiparallel: any axis perpendicular to b will do
        helper = np.array([1.0, 0.0, 0.0]) if abs(b[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(b, helper)
        n = np.linalg.norm(axis)
    axis = axis / n
    # Rodrigues; the axis is perpendicular to b so the dot term vanishes
    out = b * math.cos(angle) + np.cross(axis, b) * math.sin(angle)
    return out / np.linalg.norm(out)


def track_target(tx: Pose, rx_position, max_slew: float = math.inf) -> Pose:
    """Turn the boresight toward ``rx_position`` by at most ``max_slew`` radians.

    ``max_slew`` is the per-call budget (slew rate times tick length). When
    the remaining error fits in the budget the boresight lands exactly on
    the target direction.
    """
    delta = np.asarray(rx_position, dtype=float) - tx.position
    n = float(np.linalg.norm(delta))
    if n == 0.0:
        raise DegenerateGeometryError("cannot track a target at the transmitter position")
    target = delta / n
    err = _angle_between(tx.boresight, target)
    if err == 0.0:
        return tx
    if err <= max_slew + 1e-12:
        return replace(tx, boresight=target)
    return replace(tx, boresight=_rotate_toward(tx.boresight, target, max_slew))


def safe_distance(policy: SafetyPolicy, relative_speed: float) -> float:
    if relative_speed < 0:
        raise DomainError("relative speed must be non-negative")
    return policy.base_distance + policy.time_headway * relative_speed


def integrate_motion(pose: Pose, acceleration, dt: float) -> Pose:
    """One semi-implicit Euler step: velocity first, then position."""
    if not dt > 0:
        raise DomainError(f"dt must be positive, got {dt!r}")
    a = np.asarray(acceleration, dtype=float)
    if not np.any(a):
        v = pose.velocity
    else:
        v = pose.velocity + a * dt
    return replace(pose, velocity=v, position=pose.position + v * dt)
