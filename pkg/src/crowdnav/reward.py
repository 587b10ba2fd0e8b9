"""Comfort-aware reward: sparse navigation terms, an elliptical
personal-space penalty in each walking pedestrian's frame, and a penalty on
large per-step heading changes.

The personal zone is the front half (field of vision) of an ellipse aligned
with the pedestrian's walking direction: semi-axis `d_person` ahead,
`d_side` to the sides. A robot inside it at elliptical "depth" w (the minor
axis of the concentric similar ellipse through the robot) is penalized
``-r_p * (exp(-(w - d_side)) - 1)``, which vanishes continuously on the
boundary and grows toward the pedestrian. Pedestrians standing still have no
facing direction and contribute no social term.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import ConfigurationError
from .geometry import Vec2, angle_diff

COLLISION_REWARD = -0.25
GOAL_REWARD = 2.0

_MIN_WALKING_SPEED = 1e-6  # below this the pedestrian frame is undefined


@dataclass(frozen=True)
class RewardConfig:
    d_side: float = 0.7        # lateral comfort distance, m
    d_person: float = 1.2      # frontal personal distance, m
    r_p: float = 0.02          # social penalty scale
    r_angle: float = 0.02      # heading-change penalty
    angle_threshold: float = math.pi  # penalize wrapped changes >= this
    social_enabled: bool = True
    angular_enabled: bool = True

    def __post_init__(self):
        if not 0.0 < self.d_side < self.d_person:
            raise ConfigurationError(
                f"need 0 < d_side < d_person, got {self.d_side}, {self.d_person}")
        if self.r_p < 0.0 or self.r_angle < 0.0:
            raise ConfigurationError("penalty scales must be non-negative")


class PedestrianFramePoint(NamedTuple):
    """Robot position in a pedestrian's frame: x0 along the walking
    direction, y0 lateral."""

    x0: float
    y0: float


class RewardTerms(NamedTuple):
    base: float
    social: float
    angular: float

    @property
    def total(self) -> float:
        return self.base + self.social + self.angular


def to_pedestrian_frame(robot_pos: Vec2, ped_pos: Vec2,
                        ped_velocity: Vec2) -> PedestrianFramePoint | None:
    """Robot position with the pedestrian at the origin and +x along its
    velocity; None when the pedestrian is (numerically) stationary."""
    speed = ped_velocity.norm()
    if speed < _MIN_WALKING_SPEED:
        return None
    fx, fy = ped_velocity.x / speed, ped_velocity.y / speed
    dx = robot_pos.x - ped_pos.x
    dy = robot_pos.y - ped_pos.y
    return PedestrianFramePoint(x0=fx * dx + fy * dy, y0=-fy * dx + fx * dy)


def comfort_indicator(point: PedestrianFramePoint, config: RewardConfig) -> int:
    """1 iff the robot is strictly inside the front-half comfort ellipse."""
    if point.x0 <= 0.0:
        return 0
    value = (point.x0 * point.x0 / (config.d_person * config.d_person)
             + point.y0 * point.y0 / (config.d_side * config.d_side))
    return 1 if value < 1.0 else 0


def ellipse_minor(point: PedestrianFramePoint, config: RewardConfig) -> float:
    """Minor axis w of the concentric similar ellipse through the point;
    equals d_side on the comfort boundary and 0 at the pedestrian."""
    scaled = point.x0 * config.d_side / config.d_person
    return math.sqrt(scaled * scaled + point.y0 * point.y0)


def social_penalty(point: PedestrianFramePoint | None, config: RewardConfig) -> float:
    """Non-positive comfort-intrusion penalty for one pedestrian."""
    if point is None or not comfort_indicator(point, config):
        return 0.0
    w = ellipse_minor(point, config)
    return -config.r_p * (math.exp(-(w - config.d_side)) - 1.0)


def base_reward(d_t: float, reached_goal: bool) -> float:
    """Sparse navigation term: collision beats goal beats free-space zero.
    Collision and goal arrival are terminal."""
    if d_t <= 0.0:
        return COLLISION_REWARD
    if reached_goal:
        return GOAL_REWARD
    return 0.0


def angular_penalty(heading_t: float, heading_prev: float,
                    config: RewardConfig) -> float:
    """-r_angle when the wrapped heading change reaches the threshold."""
    return heading_change_penalty(angle_diff(heading_t, heading_prev), config)


def heading_change_penalty(change: float, config: RewardConfig) -> float:
    """Same as `angular_penalty` for an already-wrapped change in [0, pi]."""
    return -config.r_angle if change >= config.angle_threshold else 0.0


def social_penalty_sum(robot_pos: Vec2, pedestrians, config: RewardConfig) -> float:
    """Intrusion penalties summed over all pedestrians."""
    total = 0.0
    for ped in pedestrians:
        point = to_pedestrian_frame(robot_pos, ped.position, ped.velocity)
        total += social_penalty(point, config)
    return total


def total_reward(joint_state, events, config: RewardConfig) -> RewardTerms:
    """Per-step reward for the post-step state, split into components.

    `events` supplies the step's terminal flags, post-step separation and
    wrapped heading change (under forward-Euler unicycle motion the heading
    change equals angular_w * dt).
    """
    base = base_reward(events.min_separation, events.reached_goal)
    social = 0.0
    if config.social_enabled:
        social = social_penalty_sum(joint_state.robot.position,
                                    joint_state.pedestrians, config)
    angular = 0.0
    if config.angular_enabled:
        angular = heading_change_penalty(events.heading_change, config)
    return RewardTerms(base=base, social=social, angular=angular)
