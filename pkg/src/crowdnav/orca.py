"""Optimal reciprocal collision avoidance for holonomic disk agents.

For every neighbor, an agent builds a half-plane of permitted velocities:
`u` is the smallest change that takes the pair's relative velocity out of
the velocity obstacle truncated at the time horizon, the agent assumes half
the responsibility (reciprocity factor exactly 1/2), and the permitted side
is the side of the line through ``velocity + u/2`` that the outward normal
points into. The commanded velocity is the point of the feasible region
(all half-planes intersected with the speed disc) closest to the agent's
preferred velocity, computed by a deterministic sequential linear program;
when the region is empty, a least-violation program minimizes the largest
constraint violation instead, so a velocity is always returned.

Agents passed in only need ``position``, ``velocity`` and ``radius``
attributes (plus ``goal`` and ``v_pref`` for the deciding agent), which both
robot and pedestrian states provide.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

from .errors import ConfigurationError
from .geometry import Vec2

_EPS = 1e-12
_TIE_BREAK_ROTATION = 1e-3  # rad; applied only when the preferred velocity is infeasible


class HalfPlane(NamedTuple):
    """Permitted half-plane in velocity space: all v with
    ``normal . (v - point) >= 0``. The normal is unit length."""

    point: Vec2
    normal: Vec2

    def permits(self, velocity: Vec2, slack: float = 0.0) -> bool:
        return self.normal.dot(velocity - self.point) >= -slack


@dataclass(frozen=True)
class OrcaConfig:
    time_horizon: float = 5.0
    neighbor_distance: float = 10.0
    max_speed: float = 1.0

    def __post_init__(self):
        if min(self.time_horizon, self.neighbor_distance, self.max_speed) <= 0.0:
            raise ConfigurationError(f"all OrcaConfig fields must be positive: {self}")


def preferred_velocity(agent, dt: float) -> Vec2:
    """Straight-to-goal velocity: unit direction scaled by
    min(v_pref, distance/dt); zero once the goal is reached exactly."""
    offset = agent.goal - agent.position
    distance = offset.norm()
    if distance == 0.0:
        return Vec2(0.0, 0.0)
    speed = min(agent.v_pref, distance / dt)
    return offset * (speed / distance)


def orca_halfplane(agent, other, time_horizon: float, dt: float) -> HalfPlane:
    """Half-plane of velocities that keep `agent` clear of `other` for
    `time_horizon` seconds, assuming the other agent takes the other half of
    the avoidance effort. Overlapping agents fall into a recovery branch
    that separates them within one `dt`."""
    rel_pos = other.position - agent.position
    rel_vel = agent.velocity - other.velocity
    dist_sq = rel_pos.norm_sq()
    radius = agent.radius + other.radius
    radius_sq = radius * radius

    if dist_sq > radius_sq:
        # No current overlap. The velocity obstacle is a cone truncated by a
        # disc of radius r/horizon centered at rel_pos/horizon.
        w = rel_vel - rel_pos * (1.0 / time_horizon)
        w_len_sq = w.norm_sq()
        dot1 = w.dot(rel_pos)
        if dot1 < 0.0 and dot1 * dot1 > radius_sq * w_len_sq:
            # Closest point is on the truncation disc.
            w_len = math.sqrt(w_len_sq)
            unit_w = w * (1.0 / w_len)
            normal = unit_w
            u = unit_w * (radius / time_horizon - w_len)
        else:
            # Closest point is on one of the cone legs.
            leg = math.sqrt(dist_sq - radius_sq)
            if rel_pos.det(w) > 0.0:
                direction = Vec2(rel_pos.x * leg - rel_pos.y * radius,
                                 rel_pos.x * radius + rel_pos.y * leg) * (1.0 / dist_sq)
            else:
                direction = Vec2(rel_pos.x * leg + rel_pos.y * radius,
                                 -rel_pos.x * radius + rel_pos.y * leg) * (-1.0 / dist_sq)
            normal = Vec2(-direction.y, direction.x)
            u = direction * rel_vel.dot(direction) - rel_vel
    else:
        # Already overlapping: push the relative velocity out of the contact
        # within a single time step.
        inv_dt = 1.0 / dt
        w = rel_vel - rel_pos * inv_dt
        w_len = w.norm()
        if w_len == 0.0:
            # Coincident centers and equal velocities; pick a fixed direction.
            normal = Vec2(1.0, 0.0)
            u = normal * (radius * inv_dt)
        else:
            unit_w = w * (1.0 / w_len)
            normal = unit_w
            u = unit_w * (radius * inv_dt - w_len)
    return HalfPlane(point=agent.velocity + u * 0.5, normal=normal)


def _line_of(halfplane: HalfPlane) -> tuple[Vec2, Vec2]:
    """(point, direction) with the permitted side on the left of direction."""
    n = halfplane.normal
    return halfplane.point, Vec2(n.y, -n.x)


def _violation(point: Vec2, direction: Vec2, v: Vec2) -> float:
    """Positive when `v` lies on the forbidden side of the line."""
    return direction.det(point - v)


def _optimize_on_line(lines, index: int, radius: float, target: Vec2,
                      direction_mode: bool) -> Vec2 | None:
    """Best point on line `index` within the speed disc and the previous
    lines; None when that segment is empty."""
    point, direction = lines[index]
    dot = point.dot(direction)
    disc = dot * dot + radius * radius - point.norm_sq()
    if disc < 0.0:
        return None
    sqrt_disc = math.sqrt(disc)
    t_left = -dot - sqrt_disc
    t_right = -dot + sqrt_disc

    for j in range(index):
        p_j, d_j = lines[j]
        denom = direction.det(d_j)
        numer = d_j.det(point - p_j)
        if abs(denom) <= _EPS:
            if numer < 0.0:
                return None  # parallel and fully outside line j
            continue
        t = numer / denom
        if denom >= 0.0:
            t_right = min(t_right, t)
        else:
            t_left = max(t_left, t)
        if t_left > t_right:
            return None

    if direction_mode:
        t = t_right if target.dot(direction) > 0.0 else t_left
    else:
        t = direction.dot(target - point)
        t = max(t_left, min(t_right, t))
    return point + direction * t


def _solve_lines(lines, radius: float, target: Vec2,
                 direction_mode: bool) -> tuple[int, Vec2]:
    """Sequential LP: returns (index of first unsatisfiable line or
    len(lines), optimal point)."""
    if direction_mode:
        result = target * radius  # target is a unit direction here
    elif target.norm_sq() > radius * radius:
        result = target.normalized() * radius
    else:
        result = target
    for i, (point, direction) in enumerate(lines):
        if _violation(point, direction, result) > 0.0:
            candidate = _optimize_on_line(lines, i, radius, target, direction_mode)
            if candidate is None:
                return i, result
            result = candidate
    return len(lines), result


def _least_violation(lines, begin: int, radius: float, result: Vec2) -> Vec2:
    """3D fallback: progressively minimize the largest violation across the
    lines starting at `begin`, keeping earlier lines as hard constraints."""
    distance = 0.0
    for i in range(begin, len(lines)):
        p_i, d_i = lines[i]
        if _violation(p_i, d_i, result) <= distance:
            continue
        projected = []
        for j in range(i):
            p_j, d_j = lines[j]
            denom = d_i.det(d_j)
            if abs(denom) <= _EPS:
                if d_i.dot(d_j) > 0.0:
                    continue  # same direction: line j is redundant here
                point = (p_i + p_j) * 0.5
            else:
                point = p_i + d_i * (d_j.det(p_i - p_j) / denom)
            direction = (d_j - d_i).normalized()
            projected.append((point, direction))
        temp = result
        fail, result = _solve_lines(projected, radius, Vec2(-d_i.y, d_i.x),
                                    direction_mode=True)
        if fail < len(projected):
            # Numerically should not happen; keep the previous point.
            result = temp
        distance = _violation(p_i, d_i, result)
    return result


def solve_velocity_lp(halfplanes: Sequence[HalfPlane], preferred: Vec2,
                      max_speed: float) -> Vec2:
    """Feasible velocity closest to `preferred` inside the speed disc; on an
    empty intersection, the velocity minimizing the maximum violation."""
    lines = [_line_of(hp) for hp in halfplanes]
    fail, result = _solve_lines(lines, max_speed, preferred, direction_mode=False)
    if fail < len(lines):
        result = _least_violation(lines, fail, max_speed, result)
    return result


def orca_step(agent, neighbors, config: OrcaConfig, dt: float) -> Vec2:
    """One avoidance decision: half-planes for every neighbor within range,
    then the LP against the agent's preferred velocity.

    A deterministic tie-break rotates the preferred velocity by +1e-3 rad
    when (and only when) the raw preferred velocity is infeasible, which
    breaks perfectly symmetric head-on deadlocks without disturbing
    free-space motion.
    """
    planes = []
    for other in neighbors:
        if other is agent:
            continue
        if agent.position.distance_to(other.position) > config.neighbor_distance:
            continue
        planes.append(orca_halfplane(agent, other, config.time_horizon, dt))
    preferred = preferred_velocity(agent, dt)
    if planes and not all(hp.permits(preferred) for hp in planes):
        preferred = preferred.rotated(_TIE_BREAK_ROTATION)
    return solve_velocity_lp(planes, preferred, config.max_speed)
