"""Evaluation harness: seeded episode batteries, aggregate metrics,
trajectory/action-value export, and the policy presets.

Presets:

* ``ORCA``      - reciprocal-avoidance robot (holonomic), evaluated with the
                  robot invisible to the crowd: the classic baseline setting.
* ``APG_RL``    - learned value network, sparse navigation reward only.
* ``APG_CRL``   - adds the personal-space (social) penalty.
* ``APG_CARL``  - adds the social and heading-change penalties (threshold
                  pi/4 so the penalty can actually fire under the discrete
                  action space).

Episode batteries derive one RNG stream per episode from the master seed by
counter, so results are independent of worker scheduling; the
``CROWDNAV_THREADS`` environment variable caps process parallelism (default
serial).
"""
from __future__ import annotations

import csv
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .config import TrainConfig
from .errors import ConfigurationError
from .network import NetworkParams
from .training import ActionSpace, LookaheadPolicy, discounted_return, \
    orca_robot_action
from .simulation import generate_circle_crossing

PRESET_NAMES = ("ORCA", "APG_RL", "APG_CRL", "APG_CARL")

_CARL_ANGLE_THRESHOLD = math.pi / 4


@dataclass(frozen=True)
class PolicyPreset:
    name: str
    uses_network: bool
    social_reward: bool
    angular_reward: bool
    angle_threshold: float
    pedestrians_see_robot: bool
    checkpoint: str | None = None


def preset(name: str, checkpoint: str | None = None) -> PolicyPreset:
    if name == "ORCA":
        return PolicyPreset(name, uses_network=False, social_reward=False,
                            angular_reward=False, angle_threshold=math.pi,
                            pedestrians_see_robot=False)
    if name == "APG_RL":
        return PolicyPreset(name, uses_network=True, social_reward=False,
                            angular_reward=False, angle_threshold=math.pi,
                            pedestrians_see_robot=True, checkpoint=checkpoint)
    if name == "APG_CRL":
        return PolicyPreset(name, uses_network=True, social_reward=True,
                            angular_reward=False, angle_threshold=math.pi,
                            pedestrians_see_robot=True, checkpoint=checkpoint)
    if name == "APG_CARL":
        return PolicyPreset(name, uses_network=True, social_reward=True,
                            angular_reward=True,
                            angle_threshold=_CARL_ANGLE_THRESHOLD,
                            pedestrians_see_robot=True, checkpoint=checkpoint)
    raise ConfigurationError(f"unknown policy preset {name!r}; "
                             f"choose from {', '.join(PRESET_NAMES)}")


def training_config_for(p: PolicyPreset, base: TrainConfig | None = None) -> TrainConfig:
    """The TrainConfig that trains/evaluates this preset."""
    base = base or TrainConfig()
    return replace(base, social_reward=p.social_reward,
                   angular_reward=p.angular_reward,
                   angle_threshold=p.angle_threshold,
                   pedestrians_see_robot=p.pedestrians_see_robot)


# ---------------------------------------------------------------------------
# Episode records

@dataclass
class EpisodeRecord:
    """Per-step trajectory data plus episode-level metrics."""

    times: np.ndarray          # (S,) time after each step
    robot: np.ndarray          # (S, 5) x, y, vx, vy, heading (post-step)
    actions: np.ndarray        # (S, 2) linear_v, angular_w (nan for holonomic)
    rewards: np.ndarray        # (S, 3) base, social, angular components
    min_sep: np.ndarray        # (S,) post-step surface separation
    heading_change: np.ndarray  # (S,) wrapped per-step heading change
    pedestrians: np.ndarray    # (S, N, 4) x, y, vx, vy (post-step)
    outcome: str               # success | collision | timeout
    duration: float            # steps * dt
    episode_return: float      # discounted realized return
    min_gap: float             # episode minimum of min_sep

    @property
    def steps(self) -> int:
        return len(self.times)


def run_policy_episode(config: TrainConfig, world, act) -> EpisodeRecord:
    """Roll one episode and keep the full per-step record."""
    from .apg import frame_features
    from .reward import total_reward
    from .simulation import Action, step

    dt = config.dt
    n = len(world.pedestrians)
    max_steps = config.max_steps
    robot_rows = np.empty((max_steps, 5))
    action_rows = np.full((max_steps, 2), np.nan)
    ped_rows = np.empty((max_steps, n, 4))
    seps = np.empty(max_steps)
    changes = np.empty(max_steps)
    terms_rows = np.empty((max_steps, 3))
    reward_cfg = config.reward_config()

    apg_cfg = config.apg_config()
    t_len = config.history_len
    stream = np.empty((t_len - 1 + max_steps + 1, n, apg_cfg.frame_width))
    robot_pos = world.robot.position if apg_cfg.include_robot else None
    stream[0:t_len] = frame_features(world.pedestrians, apg_cfg, robot_pos)

    outcome = "timeout"
    steps = max_steps
    for t in range(max_steps):
        joint = world.joint_state()
        window = _Window(stream[t:t + t_len].transpose(1, 0, 2))
        action = act(joint, window, t)
        if isinstance(action, Action):
            action_rows[t] = (action.linear_v, action.angular_w)
        world, events = step(world, action)
        terms = total_reward(world.joint_state(), events, reward_cfg)
        terms_rows[t] = (terms.base, terms.social, terms.angular)
        robot_rows[t] = (world.robot.position.x, world.robot.position.y,
                         world.robot.velocity.x, world.robot.velocity.y,
                         world.robot.heading)
        for j, ped in enumerate(world.pedestrians):
            ped_rows[t, j] = (ped.position.x, ped.position.y,
                              ped.velocity.x, ped.velocity.y)
        seps[t] = events.min_separation
        changes[t] = events.heading_change
        robot_pos = world.robot.position if apg_cfg.include_robot else None
        stream[t_len + t] = frame_features(world.pedestrians, apg_cfg, robot_pos)
        if events.terminal:
            outcome = {"goal": "success", "collision": "collision",
                       "timeout": "timeout"}[world.event]
            steps = t + 1
            break

    rewards = terms_rows[:steps]
    return EpisodeRecord(
        times=dt * np.arange(1, steps + 1),
        robot=robot_rows[:steps].copy(),
        actions=action_rows[:steps].copy(),
        rewards=rewards.copy(),
        min_sep=seps[:steps].copy(),
        heading_change=changes[:steps].copy(),
        pedestrians=ped_rows[:steps].copy(),
        outcome=outcome,
        duration=steps * dt,
        episode_return=discounted_return(rewards.sum(axis=1), config.step_discount),
        min_gap=float(seps[:steps].min()) if steps else math.inf,
    )


class _Window:
    __slots__ = ("frames",)

    def __init__(self, frames):
        self.frames = frames

    def with_frame(self, frame):
        return np.concatenate([self.frames[:, 1:, :], frame[:, None, :]], axis=1)


# ---------------------------------------------------------------------------
# Batteries and summaries

@dataclass(frozen=True)
class EvalSummary:
    n_episodes: int
    success_rate: float
    collision_rate: float
    timeout_rate: float
    failure_rate: float      # collision + timeout
    avg_time: float          # over successful episodes (nan if none)
    avg_return: float
    avg_min_gap: float

    @staticmethod
    def from_records(records) -> "EvalSummary":
        n = len(records)
        successes = [r for r in records if r.outcome == "success"]
        collisions = sum(r.outcome == "collision" for r in records)
        timeouts = sum(r.outcome == "timeout" for r in records)
        return EvalSummary(
            n_episodes=n,
            success_rate=len(successes) / n,
            collision_rate=collisions / n,
            timeout_rate=timeouts / n,
            failure_rate=(collisions + timeouts) / n,
            avg_time=(float(np.mean([r.duration for r in successes]))
                      if successes else math.nan),
            avg_return=float(np.mean([r.episode_return for r in records])),
            avg_min_gap=float(np.mean([r.min_gap for r in records])),
        )

    def as_row(self) -> dict:
        return {
            "n_episodes": self.n_episodes,
            "success_rate": f"{self.success_rate:.6f}",
            "collision_rate": f"{self.collision_rate:.6f}",
            "timeout_rate": f"{self.timeout_rate:.6f}",
            "failure_rate": f"{self.failure_rate:.6f}",
            "avg_time": f"{self.avg_time:.6f}",
            "avg_return": f"{self.avg_return:.6f}",
            "avg_min_gap": f"{self.avg_min_gap:.6f}",
        }


def _make_policy(p: PolicyPreset, config: TrainConfig,
                 params: NetworkParams | None):
    if not p.uses_network:
        world_cfg = config.world_config()

        def act(joint, window, t):
            return orca_robot_action(joint, world_cfg)

        return act
    if params is None:
        raise ConfigurationError(f"preset {p.name} needs a checkpoint")
    policy = LookaheadPolicy(params, ActionSpace.build(config.v_pref), config)

    def act(joint, window, t):
        index = policy.act(joint, window)
        return policy.action_space.actions[index]

    return act


def _episode_seed(master_seed: int, index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence([master_seed, index])


def _run_one(args):
    p, config, params, master_seed, index = args
    world_cfg = config.world_config()
    rng = np.random.default_rng(_episode_seed(master_seed, index))
    world = generate_circle_crossing(world_cfg, rng)
    act = _make_policy(p, config, params)
    return index, run_policy_episode(config, world, act)


def evaluate(p: PolicyPreset, n_episodes: int, config: TrainConfig,
             seed: int, params: NetworkParams | None = None,
             ) -> tuple[EvalSummary, list]:
    """`n_episodes` seeded greedy episodes; returns the aggregate summary
    and all records (in episode order, independent of worker count)."""
    config = training_config_for(p, config)
    if p.uses_network and params is None:
        if p.checkpoint is None:
            raise ConfigurationError(f"preset {p.name} needs a checkpoint path")
        params = NetworkParams.load(p.checkpoint)
    jobs = [(p, config, params, seed, i) for i in range(n_episodes)]
    workers = int(os.environ.get("CROWDNAV_THREADS", "1"))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_one, jobs, chunksize=8))
    else:
        results = [_run_one(job) for job in jobs]
    results.sort(key=lambda pair: pair[0])
    records = [record for _, record in results]
    return EvalSummary.from_records(records), records


def sweep_pedestrians(p: PolicyPreset, config: TrainConfig, seed: int,
                      counts=range(3, 9), n_episodes: int = 500,
                      params: NetworkParams | None = None) -> dict:
    """Re-evaluate one trained policy across crowd sizes, no retraining."""
    summaries = {}
    for count in counts:
        cfg = replace(config, n_pedestrians=count)
        summary, _ = evaluate(p, n_episodes, cfg, seed, params=params)
        summaries[count] = summary
    return summaries


# ---------------------------------------------------------------------------
# File exports

TRAJECTORY_HEADER = ["t", "agent_id", "kind", "x", "y", "vx", "vy", "heading",
                     "action_v", "action_w", "r_base", "r_social", "r_angle",
                     "min_sep"]


def _fmt(value: float) -> str:
    return format(value, ".12g")


def export_trajectory(record: EpisodeRecord, path) -> None:
    """CSV with one robot row and one row per pedestrian per step; action
    and reward fields are populated on robot rows only."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TRAJECTORY_HEADER)
        for t in range(record.steps):
            rx, ry, rvx, rvy, heading = record.robot[t]
            writer.writerow([
                _fmt(record.times[t]), 0, "robot", _fmt(rx), _fmt(ry),
                _fmt(rvx), _fmt(rvy), _fmt(heading),
                _fmt(record.actions[t, 0]), _fmt(record.actions[t, 1]),
                _fmt(record.rewards[t, 0]), _fmt(record.rewards[t, 1]),
                _fmt(record.rewards[t, 2]), _fmt(record.min_sep[t]),
            ])
            for j in range(record.pedestrians.shape[1]):
                px, py, pvx, pvy = record.pedestrians[t, j]
                writer.writerow([
                    _fmt(record.times[t]), j + 1, "pedestrian",
                    _fmt(px), _fmt(py), _fmt(pvx), _fmt(pvy),
                    "", "", "", "", "", "", "",
                ])


def read_trajectory(path):
    """Parse an exported trajectory back into arrays; raises a configuration
    error naming the offending line on malformed input."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != TRAJECTORY_HEADER:
            raise ConfigurationError(f"{path}:1: bad trajectory header {header}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(TRAJECTORY_HEADER):
                raise ConfigurationError(
                    f"{path}:{lineno}: expected {len(TRAJECTORY_HEADER)} fields, "
                    f"got {len(row)}")
            try:
                rows.append({
                    "t": float(row[0]), "agent_id": int(row[1]), "kind": row[2],
                    "x": float(row[3]), "y": float(row[4]),
                    "vx": float(row[5]), "vy": float(row[6]),
                    "heading": float(row[7]) if row[7] else math.nan,
                    "action_v": float(row[8]) if row[8] else math.nan,
                    "action_w": float(row[9]) if row[9] else math.nan,
                    "r_base": float(row[10]) if row[10] else math.nan,
                    "r_social": float(row[11]) if row[11] else math.nan,
                    "r_angle": float(row[12]) if row[12] else math.nan,
                    "min_sep": float(row[13]) if row[13] else math.nan,
                })
            except ValueError as exc:
                raise ConfigurationError(f"{path}:{lineno}: bad field: {exc}") from exc
    if not rows:
        raise ConfigurationError(f"{path}:2: trajectory file has no data rows")
    return rows


def replay_return(rows, step_discount: float) -> float:
    """Recompute the discounted return from an exported trajectory's robot
    rows (re-ingestion oracle)."""
    rewards = [r["r_base"] + r["r_social"] + r["r_angle"]
               for r in rows if r["kind"] == "robot"]
    return discounted_return(np.array(rewards), step_discount)


def export_action_values(joint_state, history, params: NetworkParams,
                         config: TrainConfig, path) -> None:
    """Lookahead score of every action in the current state: CSV rows
    `action_v,action_w,score` in action-space order."""
    policy = LookaheadPolicy(params, ActionSpace.build(config.v_pref), config)
    scores = policy.scores(joint_state, history)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["action_v", "action_w", "score"])
        for action, score in zip(policy.action_space.actions, scores):
            writer.writerow([_fmt(action.linear_v), _fmt(action.angular_w),
                             _fmt(score)])


def write_summary(summary: EvalSummary, path, label: str = "") -> None:
    row = summary.as_row()
    if label:
        row = {"policy": label, **row}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(row.keys()))
        writer.writeheader()
        writer.writerow(row)
