"""2D crowd world: circle-crossing scenarios, kinematics, episode stepping.

The robot is a unicycle: a step first integrates the commanded angular
velocity into the heading, then moves along the new heading at the commanded
linear speed (forward Euler at the configured time step). Pedestrians are
holonomic disks driven by the reciprocal-avoidance controller; once a
pedestrian reaches its goal it stops and remains as a static obstacle.

Worlds are values: `step` returns a fresh world, so independent episodes can
run in parallel as long as each owns its world and RNG stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError
from .geometry import Vec2, angle_diff, unit, wrap_angle
from .orca import OrcaConfig, orca_step


class Action(NamedTuple):
    """Unicycle command: linear speed in [0, v_pref], angular velocity in
    [0, 2*pi] rad/s (counterclockwise only)."""

    linear_v: float
    angular_w: float


class VelocityAction(NamedTuple):
    """Holonomic command used by the ORCA-driven robot: a velocity vector is
    applied directly and the heading follows the motion direction."""

    vx: float
    vy: float


@dataclass
class RobotState:
    position: Vec2
    velocity: Vec2
    radius: float
    goal: Vec2
    v_pref: float
    heading: float  # radians, kept in [0, 2*pi)

    def copy(self) -> "RobotState":
        return RobotState(self.position, self.velocity, self.radius,
                          self.goal, self.v_pref, self.heading)

    def features(self) -> np.ndarray:
        """The 9 scalar inputs the value network sees for the robot."""
        return np.array([self.position.x, self.position.y,
                         self.velocity.x, self.velocity.y, self.radius,
                         self.goal.x, self.goal.y, self.v_pref, self.heading])


@dataclass
class PedestrianState:
    position: Vec2
    velocity: Vec2
    radius: float
    goal: Vec2 | None = None  # sim-internal; None in robot-side observations
    v_pref: float = 1.0
    at_goal: bool = False

    def copy(self) -> "PedestrianState":
        return PedestrianState(self.position, self.velocity, self.radius,
                               self.goal, self.v_pref, self.at_goal)

    def observable(self) -> "PedestrianState":
        return PedestrianState(self.position, self.velocity, self.radius)


@dataclass
class JointState:
    """Robot plus the observable pedestrian states (no pedestrian goals)."""

    robot: RobotState
    pedestrians: list


@dataclass(frozen=True)
class WorldConfig:
    n_pedestrians: int = 6
    circle_radius: float = 4.0
    agent_radius: float = 0.3
    dt: float = 0.25
    timeout: float = 25.0
    rng_seed: int = 0
    v_pref: float = 1.0
    goal_tolerance: float | None = None  # None: robot radius
    pedestrians_see_robot: bool = True
    orca: OrcaConfig = field(default_factory=OrcaConfig)

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ConfigurationError(f"dt must be positive, got {self.dt}")
        if self.circle_radius <= 2.0 * self.agent_radius:
            raise ConfigurationError(
                f"circle_radius {self.circle_radius} must exceed twice the agent radius "
                f"{self.agent_radius}")
        if self.n_pedestrians < 0 or self.timeout <= 0.0 or self.v_pref <= 0.0:
            raise ConfigurationError(f"invalid world configuration: {self}")

    def resolved_goal_tolerance(self) -> float:
        return self.agent_radius if self.goal_tolerance is None else self.goal_tolerance


class StepEvents(NamedTuple):
    collision: bool
    reached_goal: bool
    timeout: bool
    min_separation: float
    heading_change: float  # wrapped to [0, pi]

    @property
    def terminal(self) -> bool:
        return self.collision or self.reached_goal or self.timeout


@dataclass
class World:
    config: WorldConfig
    robot: RobotState
    pedestrians: list
    time: float = 0.0
    event: str | None = None  # 'collision' | 'goal' | 'timeout'

    @property
    def terminal(self) -> bool:
        return self.event is not None

    def copy(self) -> "World":
        return World(self.config, self.robot.copy(),
                     [p.copy() for p in self.pedestrians], self.time, self.event)

    def joint_state(self) -> JointState:
        return JointState(self.robot.copy(), [p.observable() for p in self.pedestrians])


# ---------------------------------------------------------------------------
# Scenario generation

_ANGLE_JITTER = 0.1   # rad, uniform
_RADIUS_JITTER = 0.1  # m, uniform
_PLACEMENT_ATTEMPTS = 100


def generate_circle_crossing(config: WorldConfig, rng: np.random.Generator) -> World:
    """Robot plus N pedestrians on a circle, goals at the antipode of each
    jittered start, no initial overlaps (jitter redrawn on overlap)."""
    n = config.n_pedestrians
    slots = [-0.5 * math.pi + 2.0 * math.pi * i / (n + 1) for i in range(n + 1)]
    placed: list[Vec2] = []
    for slot in slots:
        for attempt in range(_PLACEMENT_ATTEMPTS):
            angle = slot + rng.uniform(-_ANGLE_JITTER, _ANGLE_JITTER)
            radius = config.circle_radius + rng.uniform(-_RADIUS_JITTER, _RADIUS_JITTER)
            pos = unit(angle) * radius
            clear = all(pos.distance_to(q) > 2.0 * config.agent_radius for q in placed)
            if clear:
                placed.append(pos)
                break
        else:
            raise ConfigurationError(
                f"could not place agent {len(placed)} without overlap after "
                f"{_PLACEMENT_ATTEMPTS} attempts; circle too crowded")

    robot_pos = placed[0]
    robot_goal = -robot_pos
    robot = RobotState(position=robot_pos, velocity=Vec2(0.0, 0.0),
                       radius=config.agent_radius, goal=robot_goal,
                       v_pref=config.v_pref,
                       heading=wrap_angle(math.atan2(robot_goal.y - robot_pos.y,
                                                     robot_goal.x - robot_pos.x)))
    pedestrians = [PedestrianState(position=p, velocity=Vec2(0.0, 0.0),
                                   radius=config.agent_radius, goal=-p,
                                   v_pref=config.v_pref)
                   for p in placed[1:]]
    return World(config=config, robot=robot, pedestrians=pedestrians)


def make_world(config: WorldConfig, seed: int | None = None) -> World:
    """Convenience wrapper seeding the generator from the config."""
    rng = np.random.default_rng(config.rng_seed if seed is None else seed)
    return generate_circle_crossing(config, rng)


# ---------------------------------------------------------------------------
# Stepping

def orca_pedestrian_velocities(world: World) -> list[Vec2]:
    """One avoidance decision per pedestrian from the pre-step snapshot.
    Pedestrians that already reached their goals stay stopped."""
    cfg = world.config
    commands = []
    for i, ped in enumerate(world.pedestrians):
        if ped.at_goal:
            commands.append(Vec2(0.0, 0.0))
            continue
        neighbors: list = [p for j, p in enumerate(world.pedestrians) if j != i]
        if cfg.pedestrians_see_robot:
            neighbors.append(world.robot)
        commands.append(orca_step(ped, neighbors, cfg.orca, cfg.dt))
    return commands


def _advance_robot(robot: RobotState, action, dt: float) -> tuple[RobotState, float]:
    """New robot state plus the wrapped heading change."""
    if isinstance(action, VelocityAction):
        velocity = Vec2(action.vx, action.vy)
        if velocity.norm() > 1e-12:
            heading = wrap_angle(math.atan2(velocity.y, velocity.x))
        else:
            heading = robot.heading
    else:
        heading = wrap_angle(robot.heading + action.angular_w * dt)
        velocity = unit(heading) * action.linear_v
    new = RobotState(position=robot.position + velocity * dt, velocity=velocity,
                     radius=robot.radius, goal=robot.goal, v_pref=robot.v_pref,
                     heading=heading)
    return new, angle_diff(heading, robot.heading)


def step(world: World, robot_action,
         pedestrian_policy: Callable[[World], list[Vec2]] | None = None,
         dt: float | None = None) -> tuple[World, StepEvents]:
    """Advance the world by one time step and report terminal events.

    Pedestrian commands are computed from the pre-step snapshot so all agents
    move simultaneously. Collision takes precedence over goal arrival, which
    takes precedence over timeout; terminal events are data, not errors.
    """
    cfg = world.config
    dt = cfg.dt if dt is None else dt
    commands = (pedestrian_policy or orca_pedestrian_velocities)(world)

    robot, heading_change = _advance_robot(world.robot, robot_action, dt)

    pedestrians = []
    for ped, command in zip(world.pedestrians, commands):
        if ped.at_goal:
            pedestrians.append(ped.copy())
            continue
        pos = ped.position + command * dt
        moved = PedestrianState(position=pos, velocity=command, radius=ped.radius,
                                goal=ped.goal, v_pref=ped.v_pref)
        if ped.goal is not None and pos.distance_to(ped.goal) <= ped.radius:
            moved.at_goal = True
            moved.velocity = Vec2(0.0, 0.0)
        pedestrians.append(moved)

    new = World(config=cfg, robot=robot, pedestrians=pedestrians,
                time=world.time + dt)
    separation = min_separation(new)
    collision = separation <= 0.0
    reached = goal_reached(robot, cfg.resolved_goal_tolerance())
    timeout = (not collision and not reached
               and new.time >= cfg.timeout - 1e-9)
    if collision:
        new.event = "collision"
    elif reached:
        new.event = "goal"
    elif timeout:
        new.event = "timeout"
    events = StepEvents(collision=collision, reached_goal=reached and not collision,
                        timeout=timeout, min_separation=separation,
                        heading_change=heading_change)
    return new, events


def propagate_linear(joint_state: JointState, dt: float, action) -> JointState:
    """One-step prediction: robot advanced under `action` exactly as in
    `step`, pedestrians extrapolated at constant velocity, no collision
    resolution."""
    robot, _ = _advance_robot(joint_state.robot, action, dt)
    pedestrians = [PedestrianState(position=p.position + p.velocity * dt,
                                   velocity=p.velocity, radius=p.radius)
                   for p in joint_state.pedestrians]
    return JointState(robot, pedestrians)


def min_separation(state) -> float:
    """Smallest robot-pedestrian surface distance (negative when
    overlapping); +inf with no pedestrians. Works on worlds and joint states."""
    robot = state.robot
    best = math.inf
    for ped in state.pedestrians:
        d = robot.position.distance_to(ped.position) - robot.radius - ped.radius
        if d < best:
            best = d
    return best


def goal_reached(robot: RobotState, tolerance: float | None = None) -> bool:
    """True once the robot's center is within `tolerance` of the goal
    (default: its own radius, the discrete-time stand-in for exact arrival)."""
    if tolerance is None:
        tolerance = robot.radius
    return robot.position.distance_to(robot.goal) <= tolerance


# ---------------------------------------------------------------------------
# Scenario files

def save_scenario(world: World, path) -> None:
    """One agent per line: `kind px py vx vy radius gx gy` (SI units, 6
    decimals), preceded by a `# seed=<u64>` header."""
    lines = [f"# seed={world.config.rng_seed}"]
    agents = [("robot", world.robot)] + [("pedestrian", p) for p in world.pedestrians]
    for kind, a in agents:
        goal = a.goal if a.goal is not None else Vec2(float("nan"), float("nan"))
        lines.append(f"{kind} {a.position.x:.6f} {a.position.y:.6f} "
                     f"{a.velocity.x:.6f} {a.velocity.y:.6f} {a.radius:.6f} "
                     f"{goal.x:.6f} {goal.y:.6f}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_scenario(path, config: WorldConfig | None = None,
                  v_pref: float = 1.0) -> World:
    """Rebuild a world from a scenario file. The robot heading (not stored)
    is recovered from its velocity direction, or toward the goal when
    stationary."""
    robot = None
    pedestrians = []
    seed = 0
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.strip()
            if not text:
                continue
            if text.startswith("#"):
                if "seed=" in text:
                    try:
                        seed = int(text.split("seed=", 1)[1])
                    except ValueError as exc:
                        raise ConfigurationError(
                            f"{path}:{lineno}: bad seed header: {text!r}") from exc
                continue
            parts = text.split()
            if len(parts) != 8:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected 8 fields `kind px py vx vy radius gx gy`, "
                    f"got {len(parts)}")
            kind = parts[0]
            try:
                px, py, vx, vy, radius, gx, gy = (float(v) for v in parts[1:])
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: non-numeric field") from exc
            if kind == "robot":
                velocity = Vec2(vx, vy)
                if velocity.norm() > 1e-12:
                    heading = wrap_angle(math.atan2(vy, vx))
                else:
                    heading = wrap_angle(math.atan2(gy - py, gx - px))
                robot = RobotState(position=Vec2(px, py), velocity=velocity,
                                   radius=radius, goal=Vec2(gx, gy),
                                   v_pref=v_pref, heading=heading)
            elif kind == "pedestrian":
                ped = PedestrianState(position=Vec2(px, py), velocity=Vec2(vx, vy),
                                      radius=radius, goal=Vec2(gx, gy), v_pref=v_pref)
                ped.at_goal = ped.position.distance_to(ped.goal) <= radius
                pedestrians.append(ped)
            else:
                raise ConfigurationError(f"{path}:{lineno}: unknown agent kind {kind!r}")
    if robot is None:
        raise ConfigurationError(f"{path}: no robot line found")
    if config is None:
        config = WorldConfig(n_pedestrians=len(pedestrians), rng_seed=seed,
                             agent_radius=robot.radius, v_pref=v_pref)
    else:
        config = replace(config, n_pedestrians=len(pedestrians), rng_seed=seed)
    return World(config=config, robot=robot, pedestrians=pedestrians)
