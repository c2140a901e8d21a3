"""Shared 2D/3D geometric primitives and the scalar formulas used by every stage."""

from __future__ import annotations

import math
from dataclasses import dataclass


def wrap_angle(rad: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    a = math.fmod(rad, 2.0 * math.pi)
    if a <= -math.pi:
        a += 2.0 * math.pi
    elif a > math.pi:
        a -= 2.0 * math.pi
    return a


@dataclass(frozen=True)
class Point3:
    """Point in the sensor/vehicle frame, meters."""

    x: float
    y: float
    z: float


@dataclass(frozen=True)
class Point2:
    """Planar point, meters."""

    x: float
    y: float


@dataclass(frozen=True)
class Pose2:
    """Planar pose: position in meters, heading in radians, normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "theta", wrap_angle(self.theta))


def polar_of(p: Point3) -> tuple[float, float]:
    """Horizontal range and azimuth of a 3D point.

    Returns (range, angle) with range = sqrt(x^2 + y^2) and
    angle = atan2(y, x) in (-pi, pi]. At the origin the angle is 0.
    """
    return math.hypot(p.x, p.y), math.atan2(p.y, p.x)


def signed_side(a: Point2, b: Point2, c: Point2) -> float:
    """Orientation discriminant of c relative to the directed segment a->b.

    Positive means c lies left of a->b, negative right, zero collinear.
    """
    return (a.x - c.x) * (b.y - c.y) - (a.y - c.y) * (b.x - c.x)


def point_line_distance_side(p: Point2, a: Point2, b: Point2) -> tuple[float, bool]:
    """Perpendicular distance from p to the infinite line through a, b, plus
    whether p falls on the outer side of the chord.

    Boundaries are traced counter-clockwise, so the polygon interior lies left
    of a->b and "outer" is the right side (signed_side < 0).
    """
    ab_x = b.x - a.x
    ab_y = b.y - a.y
    norm = math.hypot(ab_x, ab_y)
    if norm == 0.0:
        raise ValueError("zero-length chord")
    cross = signed_side(a, b, p)
    return abs(cross) / norm, cross < 0.0
