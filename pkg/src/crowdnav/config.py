"""Run configuration: one flat dataclass mirrored by a `key = value` file.

Both the trainer and the evaluation tooling share this format. Keys must
match the `TrainConfig` field names exactly; unknown keys are errors. Blank
lines and `#` comments are permitted.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass

import numpy as np

from .apg import ApgConfig
from .errors import ConfigurationError
from .orca import OrcaConfig
from .reward import RewardConfig
from .simulation import WorldConfig


@dataclass(frozen=True)
class TrainConfig:
    # discounting and kinematics
    gamma: float = 0.9
    dt: float = 0.25
    v_pref: float = 1.0
    # optimization
    lr_pretrain: float = 0.01
    lr_train: float = 0.001
    batch_size: int = 100
    # world
    n_pedestrians: int = 6
    circle_radius: float = 4.0
    agent_radius: float = 0.3
    timeout: float = 25.0
    pedestrians_see_robot: bool = True
    # encoder
    history_len: int = 5
    apg_sectors: int = 12
    apg_reach: float = 3.0
    # schedule
    pretrain_episodes: int = 3000
    pretrain_epochs: int = 50
    train_episodes: int = 10000
    epsilon_start: float = 0.5
    epsilon_end: float = 0.1
    epsilon_end_episode: int = 5000
    target_sync_interval: int = 1000
    buffer_capacity: int = 100000
    checkpoint_every: int = 500
    seed: int = 0
    # reward shaping
    social_reward: bool = False
    angular_reward: bool = False
    angle_threshold: float = math.pi
    # training compute precision; checkpoints are always float64
    precision: str = "float32"

    def __post_init__(self):
        if self.precision not in ("float32", "float64"):
            raise ConfigurationError(
                f"precision must be float32 or float64, got {self.precision!r}")
        if not 0.0 < self.gamma < 1.0:
            raise ConfigurationError(f"gamma must be in (0, 1), got {self.gamma}")
        if self.batch_size < 1 or self.buffer_capacity < self.batch_size:
            raise ConfigurationError(
                f"need buffer_capacity >= batch_size >= 1, got "
                f"{self.buffer_capacity}, {self.batch_size}")
        if self.epsilon_end_episode < 1:
            raise ConfigurationError("epsilon_end_episode must be >= 1")
        if self.target_sync_interval < 1 or self.checkpoint_every < 1:
            raise ConfigurationError("intervals must be >= 1")
        if min(self.lr_pretrain, self.lr_train) <= 0.0:
            raise ConfigurationError("learning rates must be positive")

    @property
    def step_discount(self) -> float:
        """Discount applied per simulator step: gamma ** (dt * v_pref)."""
        return self.gamma ** (self.dt * self.v_pref)

    @property
    def dtype(self):
        return np.float32 if self.precision == "float32" else np.float64

    @property
    def max_steps(self) -> int:
        return int(round(self.timeout / self.dt))

    def world_config(self, seed: int = 0, n_pedestrians: int | None = None,
                     pedestrians_see_robot: bool | None = None) -> WorldConfig:
        return WorldConfig(
            n_pedestrians=self.n_pedestrians if n_pedestrians is None else n_pedestrians,
            circle_radius=self.circle_radius,
            agent_radius=self.agent_radius,
            dt=self.dt,
            timeout=self.timeout,
            rng_seed=seed,
            v_pref=self.v_pref,
            pedestrians_see_robot=(self.pedestrians_see_robot
                                   if pedestrians_see_robot is None
                                   else pedestrians_see_robot),
            orca=OrcaConfig(max_speed=self.v_pref),
        )

    def apg_config(self) -> ApgConfig:
        return ApgConfig(sectors=self.apg_sectors, reach=self.apg_reach)

    def reward_config(self) -> RewardConfig:
        return RewardConfig(angle_threshold=self.angle_threshold,
                            social_enabled=self.social_reward,
                            angular_enabled=self.angular_reward)


def _parse_value(text: str, field_type) -> object:
    if field_type is bool:
        lowered = text.lower()
        if lowered in ("true", "1", "yes", "on"):
            return True
        if lowered in ("false", "0", "no", "off"):
            return False
        raise ValueError(f"not a boolean: {text!r}")
    if field_type is int:
        return int(text)
    if field_type is float:
        return float(text)
    return text


def load_config(path, base: TrainConfig | None = None) -> TrainConfig:
    """Parse a flat `key = value` file into a TrainConfig, starting from
    `base` (or the defaults)."""
    fields = {f.name: f.type for f in dataclasses.fields(TrainConfig)}
    types = {"float": float, "int": int, "bool": bool, "str": str}
    overrides = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise ConfigurationError(f"cannot read config file {path}: {exc}") from exc
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            text = raw.split("#", 1)[0].strip()
            if not text:
                continue
            if "=" not in text:
                raise ConfigurationError(
                    f"{path}:{lineno}: expected `key = value`, got {raw.strip()!r}")
            key, _, value = text.partition("=")
            key = key.strip()
            value = value.strip()
            if key not in fields:
                raise ConfigurationError(f"{path}:{lineno}: unknown key {key!r}")
            field_type = fields[key]
            if isinstance(field_type, str):  # postponed annotations
                field_type = types.get(field_type, str)
            try:
                overrides[key] = _parse_value(value, field_type)
            except ValueError as exc:
                raise ConfigurationError(
                    f"{path}:{lineno}: bad value for {key}: {value!r}") from exc
    base = base or TrainConfig()
    return dataclasses.replace(base, **overrides)


def save_config(config: TrainConfig, path) -> None:
    lines = [f"{f.name} = {getattr(config, f.name)}"
             for f in dataclasses.fields(TrainConfig)]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
