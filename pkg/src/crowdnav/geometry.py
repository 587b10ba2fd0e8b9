"""Small 2D vector and angle helpers used throughout the simulator."""
from __future__ import annotations

import math
from typing import NamedTuple

TWO_PI = 2.0 * math.pi


class Vec2(NamedTuple):
    """Immutable 2D vector. Units are meters or m/s depending on context.

    Tuple semantics are overridden: ``+``/``-`` are componentwise and ``*``
    scales, so a Vec2 behaves like a vector, not a sequence to concatenate.
    """

    x: float
    y: float

    def __add__(self, other) -> "Vec2":
        return Vec2(self.x + other[0], self.y + other[1])

    def __sub__(self, other) -> "Vec2":
        return Vec2(self.x - other[0], self.y - other[1])

    def __mul__(self, scale: float) -> "Vec2":
        return Vec2(self.x * scale, self.y * scale)

    __rmul__ = __mul__

    def __neg__(self) -> "Vec2":
        return Vec2(-self.x, -self.y)

    def dot(self, other) -> float:
        return self.x * other[0] + self.y * other[1]

    def det(self, other) -> float:
        """z-component of the cross product; positive if `other` is CCW of self."""
        return self.x * other[1] - self.y * other[0]

    def norm(self) -> float:
        return math.hypot(self.x, self.y)

    def norm_sq(self) -> float:
        return self.x * self.x + self.y * self.y

    def distance_to(self, other) -> float:
        return math.hypot(self.x - other[0], self.y - other[1])

    def normalized(self) -> "Vec2":
        n = math.hypot(self.x, self.y)
        if n == 0.0:
            return Vec2(0.0, 0.0)
        return Vec2(self.x / n, self.y / n)

    def rotated(self, angle: float) -> "Vec2":
        c = math.cos(angle)
        s = math.sin(angle)
        return Vec2(c * self.x - s * self.y, s * self.x + c * self.y)


def unit(angle: float) -> Vec2:
    """Unit vector at `angle` radians from +x."""
    return Vec2(math.cos(angle), math.sin(angle))


def wrap_angle(angle: float) -> float:
    """Wrap to [0, 2*pi). Guards against the float edge where a tiny negative
    input maps onto 2*pi exactly."""
    wrapped = angle % TWO_PI
    return 0.0 if wrapped >= TWO_PI else wrapped


def angle_diff(a: float, b: float) -> float:
    """Magnitude of the wrapped difference between two angles, in [0, pi]."""
    d = (a - b) % TWO_PI
    return min(d, TWO_PI - d)
