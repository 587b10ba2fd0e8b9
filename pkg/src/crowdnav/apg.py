"""Angular pedestrian grid encoding and rolling observation histories.

Each pedestrian's local crowd is summarized by a K-sector polar grid centered
on that pedestrian with world-aligned axes: sector k (1-based) covers angles
``[(k-1)*2*pi/K, k*2*pi/K)`` and stores the distance to the nearest other
pedestrian inside that sector, clamped at the grid reach; empty sectors
saturate at the reach value. The code is therefore a length-K vector of
distances in ``(0, reach]`` that depends only on pedestrian positions.

An observation *frame* for a crowd of N pedestrians is a float64 array of
shape ``(N, 5 + K)`` with rows ``[px, py, vx, vy, radius, code_1..code_K]``.
`ObservationHistory` maintains the last T frames per pedestrian, oldest
first; at episode start the first frame is replicated to fill the window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError
from .geometry import TWO_PI, Vec2, wrap_angle


@dataclass(frozen=True)
class ApgConfig:
    """Grid geometry: `sectors` angular bins, `reach` meters of radius.

    `include_robot` optionally adds the robot as an occupant of every
    pedestrian's grid (off by default: the grid describes crowd-internal
    interaction).
    """

    sectors: int = 12
    reach: float = 3.0
    include_robot: bool = False

    def __post_init__(self):
        if self.sectors < 1:
            raise ConfigurationError(f"sectors must be >= 1, got {self.sectors}")
        if self.reach <= 0.0:
            raise ConfigurationError(f"reach must be positive, got {self.reach}")

    @property
    def frame_width(self) -> int:
        return 5 + self.sectors


def sector_index(angle: float, sectors: int) -> int:
    """1-based sector of `angle`: k such that the wrapped angle falls in
    [(k-1)*2*pi/K, k*2*pi/K). Half-open bins, so boundary angles are never
    double counted."""
    wrapped = wrap_angle(angle)
    k = int(wrapped * sectors / TWO_PI)
    return min(k, sectors - 1) + 1


def polar_of(center: Vec2, other: Vec2) -> tuple[float, float]:
    """Polar coordinates (rho, phi) of `other` in the world-aligned frame
    centered at `center`; phi wrapped to [0, 2*pi). Coincident points map to
    (0, 0) by convention."""
    dx = other[0] - center[0]
    dy = other[1] - center[1]
    rho = math.hypot(dx, dy)
    if rho == 0.0:
        return 0.0, 0.0
    return rho, wrap_angle(math.atan2(dy, dx))


def encode_apg(center: int, positions: np.ndarray, config: ApgConfig,
               robot_position: Vec2 | None = None) -> np.ndarray:
    """Grid code for the pedestrian at index `center`.

    `positions` is an (N, 2) array of pedestrian positions. Per sector the
    value is the smallest center-to-center distance among occupants within
    reach, or the reach itself when the sector is empty. The robot position
    participates only when the config says so.
    """
    if not 0 <= center < len(positions):
        raise ValueError(f"center index {center} out of range for {len(positions)} pedestrians")
    code = np.full(config.sectors, config.reach, dtype=np.float64)
    cx, cy = positions[center]
    others = [(float(x), float(y)) for j, (x, y) in enumerate(positions) if j != center]
    if config.include_robot and robot_position is not None:
        others.append((robot_position[0], robot_position[1]))
    for ox, oy in others:
        rho, phi = polar_of(Vec2(cx, cy), Vec2(ox, oy))
        if rho > config.reach:
            continue
        k = sector_index(phi, config.sectors) - 1
        if rho < code[k]:
            code[k] = rho
    return code


def encode_all(positions: np.ndarray, config: ApgConfig,
               robot_position: Vec2 | None = None) -> np.ndarray:
    """Vectorized `encode_apg` for every pedestrian at once; returns (N, K)."""
    n = len(positions)
    codes = np.full((n, config.sectors), config.reach, dtype=np.float64)
    if n == 0:
        return codes
    occupants = positions
    if config.include_robot and robot_position is not None:
        occupants = np.vstack([positions, [robot_position[0], robot_position[1]]])
    diff = occupants[None, :, :] - positions[:, None, :]      # (N, M, 2)
    rho = np.hypot(diff[:, :, 0], diff[:, :, 1])
    phi = np.arctan2(diff[:, :, 1], diff[:, :, 0]) % TWO_PI
    sector = np.minimum((phi * (config.sectors / TWO_PI)).astype(np.intp),
                        config.sectors - 1)
    mask = rho <= config.reach
    mask[np.arange(n), np.arange(n)] = False                  # skip self-pairs
    rows = np.broadcast_to(np.arange(n)[:, None], rho.shape)[mask]
    np.minimum.at(codes, (rows, sector[mask]), rho[mask])
    return codes


def frame_features(pedestrians, config: ApgConfig,
                   robot_position: Vec2 | None = None) -> np.ndarray:
    """Observation frame (N, 5+K) for the current pedestrian states."""
    n = len(pedestrians)
    out = np.empty((n, config.frame_width), dtype=np.float64)
    if n == 0:
        return out
    for i, p in enumerate(pedestrians):
        out[i, 0] = p.position.x
        out[i, 1] = p.position.y
        out[i, 2] = p.velocity.x
        out[i, 3] = p.velocity.y
        out[i, 4] = p.radius
    out[:, 5:] = encode_all(out[:, 0:2].copy(), config, robot_position)
    return out


class ObservationHistory:
    """Last-T observation frames per pedestrian, oldest to newest.

    The first pushed frame is replicated to fill the window; if the crowd
    size changes mid-episode (defensive case, worlds keep it fixed) the
    window is rebuilt by replicating the new frame.
    """

    def __init__(self, history_len: int):
        if history_len < 1:
            raise ConfigurationError(f"history_len must be >= 1, got {history_len}")
        self.length = history_len
        self._frames: np.ndarray | None = None

    def reset(self) -> None:
        self._frames = None

    def push_frame(self, frame: np.ndarray) -> None:
        n, width = frame.shape
        if self._frames is None or self._frames.shape[0] != n or self._frames.shape[2] != width:
            self._frames = np.repeat(frame[:, None, :], self.length, axis=1)
        else:
            self._frames = np.concatenate([self._frames[:, 1:, :], frame[:, None, :]], axis=1)

    def push(self, joint_state, config: ApgConfig) -> None:
        """Encode the current joint state and append it to the window."""
        robot_pos = joint_state.robot.position if config.include_robot else None
        self.push_frame(frame_features(joint_state.pedestrians, config, robot_pos))

    @property
    def frames(self) -> np.ndarray:
        """(N, T, 5+K) window; raises if nothing has been pushed."""
        if self._frames is None:
            raise RuntimeError("history is empty; push a frame first")
        return self._frames

    def with_frame(self, frame: np.ndarray) -> np.ndarray:
        """Window as it would look after pushing `frame`, without mutating.
        Used for one-step lookahead."""
        if self._frames is None or self._frames.shape[0] != frame.shape[0]:
            return np.repeat(frame[:, None, :], self.length, axis=1)
        return np.concatenate([self._frames[:, 1:, :], frame[:, None, :]], axis=1)
