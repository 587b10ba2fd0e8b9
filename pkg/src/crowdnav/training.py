"""Deep value learning on the crowd world.

Action selection is one-step lookahead: every discrete action is scored by
the immediate reward on the linearly predicted next state plus the
discounted network value of that state, with epsilon-greedy exploration
during training. Updates are plain SGD on the squared TD error against a
periodically synchronized frozen target network, with uniform replay. Before
reinforcement learning the network is initialized by regressing the
discounted return-to-go of states visited by an ORCA-driven robot.
"""
from __future__ import annotations

import math
import os
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .apg import frame_features
from .config import TrainConfig
from .errors import ConfigurationError, InvariantViolation
from .geometry import TWO_PI
from .network import NetworkParams, backward_batch, crowd_summaries, forward_batch, \
    value_from_summaries
from .orca import orca_step
from .reward import total_reward
from .simulation import Action, PedestrianState, VelocityAction, World, \
    generate_circle_crossing, step


@dataclass(frozen=True)
class ActionSpace:
    """Discrete unicycle commands: `n_speeds` linear speeds uniform over
    [0, v_pref] (endpoints included) crossed with `n_omegas` angular
    velocities {2*pi*j/n_omegas}. Index order is speed-major."""

    actions: tuple
    speeds: np.ndarray
    omegas: np.ndarray

    @classmethod
    def build(cls, v_pref: float = 1.0, n_speeds: int = 5,
              n_omegas: int = 16) -> "ActionSpace":
        speed_values = [v_pref * i / (n_speeds - 1) for i in range(n_speeds)]
        omega_values = [TWO_PI * j / n_omegas for j in range(n_omegas)]
        actions = tuple(Action(v, w) for v in speed_values for w in omega_values)
        return cls(actions=actions,
                   speeds=np.array([a.linear_v for a in actions]),
                   omegas=np.array([a.angular_w for a in actions]))

    def __len__(self) -> int:
        return len(self.actions)


class LookaheadPolicy:
    """Greedy/epsilon-greedy action selection by one-step lookahead.

    Scores every action as ``R(predicted state) + gamma**(dt*v_pref) *
    V(predicted state)``. The crowd prediction (constant-velocity
    pedestrians) is shared across actions, so one crowd encoding serves all
    of them; only the LSTM scan order and the value head depend on the
    robot's predicted pose, and those run batched over actions.
    """

    def __init__(self, params: NetworkParams, action_space: ActionSpace,
                 config: TrainConfig):
        self.params = params
        self.action_space = action_space
        self.config = config
        self.apg_config = config.apg_config()
        self.reward_config = config.reward_config()
        self.goal_tolerance = config.agent_radius

    def scores(self, joint_state, history) -> np.ndarray:
        cfg = self.config
        dt = cfg.dt
        rcfg = self.reward_config
        robot = joint_state.robot
        peds = joint_state.pedestrians
        n = len(peds)
        n_actions = len(self.action_space)

        if n:
            predicted = [PedestrianState(position=p.position + p.velocity * dt,
                                         velocity=p.velocity, radius=p.radius)
                         for p in peds]
            # With include_robot the grid uses the current robot position; the
            # per-action robot displacement within one dt is ignored here.
            robot_pos = robot.position if self.apg_config.include_robot else None
            frame = frame_features(predicted, self.apg_config, robot_pos)
            window = history.with_frame(frame)
            summaries = crowd_summaries(window, self.params)
            ped_pos = frame[:, 0:2]
            ped_vel = frame[:, 2:4]
            ped_radius = frame[:, 4]
        else:
            summaries = np.zeros((0, 50))

        speeds, omegas = self.action_space.speeds, self.action_space.omegas
        headings = np.mod(robot.heading + omegas * dt, TWO_PI)
        vel_x = speeds * np.cos(headings)
        vel_y = speeds * np.sin(headings)
        pos_x = robot.position.x + vel_x * dt
        pos_y = robot.position.y + vel_y * dt

        if n:
            center_dx = pos_x[:, None] - ped_pos[None, :, 0]
            center_dy = pos_y[:, None] - ped_pos[None, :, 1]
            center_dist = np.hypot(center_dx, center_dy)
            separation = (center_dist - robot.radius - ped_radius[None, :]).min(axis=1)
        else:
            separation = np.full(n_actions, np.inf)
        goal_dist = np.hypot(pos_x - robot.goal.x, pos_y - robot.goal.y)
        reached = goal_dist <= self.goal_tolerance
        reward = np.where(separation <= 0.0, -0.25, np.where(reached, 2.0, 0.0))

        if rcfg.social_enabled and n:
            ped_speed = np.hypot(ped_vel[:, 0], ped_vel[:, 1])
            for j in range(n):
                if ped_speed[j] < 1e-6:
                    continue
                fx, fy = ped_vel[j, 0] / ped_speed[j], ped_vel[j, 1] / ped_speed[j]
                dx = pos_x - ped_pos[j, 0]
                dy = pos_y - ped_pos[j, 1]
                x0 = fx * dx + fy * dy
                y0 = -fy * dx + fx * dy
                inside = (x0 > 0.0) & ((x0 / rcfg.d_person) ** 2
                                       + (y0 / rcfg.d_side) ** 2 < 1.0)
                if inside.any():
                    w = np.sqrt((x0 * rcfg.d_side / rcfg.d_person) ** 2 + y0 * y0)
                    penalty = -rcfg.r_p * (np.exp(-(w - rcfg.d_side)) - 1.0)
                    reward = reward + np.where(inside, penalty, 0.0)
        if rcfg.angular_enabled:
            turn = np.mod(omegas * dt, TWO_PI)
            change = np.minimum(turn, TWO_PI - turn)
            reward = reward - rcfg.r_angle * (change >= rcfg.angle_threshold)

        robot_feats = np.empty((n_actions, 9))
        robot_feats[:, 0] = pos_x
        robot_feats[:, 1] = pos_y
        robot_feats[:, 2] = vel_x
        robot_feats[:, 3] = vel_y
        robot_feats[:, 4] = robot.radius
        robot_feats[:, 5] = robot.goal.x
        robot_feats[:, 6] = robot.goal.y
        robot_feats[:, 7] = robot.v_pref
        robot_feats[:, 8] = headings
        if n:
            order = np.argsort(-center_dist, axis=1, kind="stable")
            ordered = summaries[order]          # (A, N, 50)
        else:
            ordered = np.zeros((n_actions, 0, 50))
        values = value_from_summaries(robot_feats, ordered, self.params)
        return reward + cfg.step_discount * values

    def act(self, joint_state, history, epsilon: float = 0.0,
            rng: np.random.Generator | None = None) -> int:
        if epsilon > 0.0:
            if rng is None:
                raise ConfigurationError("epsilon-greedy selection needs an RNG")
            if rng.random() < epsilon:
                return int(rng.integers(len(self.action_space)))
        return int(np.argmax(self.scores(joint_state, history)))


def select_action(joint_state, history, params: NetworkParams,
                  action_space: ActionSpace, epsilon: float,
                  rng: np.random.Generator | None,
                  config: TrainConfig) -> int:
    """Functional form of `LookaheadPolicy.act` (ties break to the lowest
    action index via argmax)."""
    policy = LookaheadPolicy(params, action_space, config)
    return policy.act(joint_state, history, epsilon, rng)


def epsilon_schedule(episode: int, config: TrainConfig) -> float:
    """Linear decay from epsilon_start at episode 0 to epsilon_end at
    epsilon_end_episode, constant afterwards."""
    if episode >= config.epsilon_end_episode:
        return config.epsilon_end
    frac = episode / config.epsilon_end_episode
    return config.epsilon_start + frac * (config.epsilon_end - config.epsilon_start)


# ---------------------------------------------------------------------------
# Replay

class Transition(NamedTuple):
    """One step of experience. Frame windows are (T, N, F) views into the
    episode's shared frame stream (no copies until batching)."""

    frames: np.ndarray
    robot: np.ndarray
    action: int
    reward: float
    next_frames: np.ndarray
    next_robot: np.ndarray
    terminal: bool


class ReplayBuffer:
    """Bounded FIFO with uniform sampling (with replacement) over contents."""

    def __init__(self, capacity: int):
        if capacity < 1:
            raise ConfigurationError("buffer capacity must be >= 1")
        self.capacity = capacity
        self._items: list[Transition] = []
        self._cursor = 0

    def push(self, transition: Transition) -> None:
        if len(self._items) < self.capacity:
            self._items.append(transition)
        else:
            self._items[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def sample(self, rng: np.random.Generator, count: int) -> list[Transition]:
        indices = rng.integers(0, len(self._items), size=count)
        return [self._items[i] for i in indices]

    def __len__(self) -> int:
        return len(self._items)


def _order_frames(frames: np.ndarray, robot: np.ndarray) -> np.ndarray:
    """Apply the LSTM ordering to batched windows: `frames` (B, N, T, F)
    with the newest frame last, `robot` (B, 9)."""
    if frames.shape[1] == 0:
        return frames
    positions = frames[:, :, -1, 0:2]
    dx = positions[:, :, 0] - robot[:, None, 0]
    dy = positions[:, :, 1] - robot[:, None, 1]
    order = np.argsort(-np.hypot(dx, dy), axis=1, kind="stable")
    return np.take_along_axis(frames, order[:, :, None, None], axis=1)


def _batch_arrays(transitions: list[Transition]):
    robot = np.stack([t.robot for t in transitions])
    frames = np.stack([t.frames for t in transitions]).transpose(0, 2, 1, 3)
    next_robot = np.stack([t.next_robot for t in transitions])
    next_frames = np.stack([t.next_frames for t in transitions]).transpose(0, 2, 1, 3)
    rewards = np.array([t.reward for t in transitions])
    terminal = np.array([t.terminal for t in transitions], dtype=bool)
    return (_order_frames(frames, robot), robot,
            _order_frames(next_frames, next_robot), next_robot, rewards, terminal)


def td_target(transition: Transition, target_params: NetworkParams,
              config: TrainConfig) -> float:
    """TD target for one transition: the reward alone when terminal, else
    reward plus the discounted frozen-network value of the successor."""
    if transition.terminal:
        return transition.reward
    next_frames = _order_frames(
        transition.next_frames.transpose(1, 0, 2)[None, ...],
        transition.next_robot[None, :])
    values, _ = forward_batch(transition.next_robot[None, :], next_frames,
                              target_params)
    return float(transition.reward + config.step_discount * values[0])


def sync_target(params: NetworkParams) -> NetworkParams:
    """Deep copy of the online parameters, immutable until the next sync."""
    return params.copy()


def train_step(buffer: ReplayBuffer, params: NetworkParams,
               target_params: NetworkParams, config: TrainConfig,
               rng: np.random.Generator) -> float | None:
    """One SGD update on a uniform batch; returns the pre-update loss, or
    None when the buffer cannot fill a batch yet (skip signal)."""
    if len(buffer) < config.batch_size:
        return None
    batch = buffer.sample(rng, config.batch_size)
    frames, robot, next_frames, next_robot, rewards, terminal = _batch_arrays(batch)

    next_values, _ = forward_batch(next_robot, next_frames, target_params)
    targets = rewards + config.step_discount * next_values * (~terminal)
    bound = 2.0 + config.step_discount * float(np.abs(next_values).max())
    if float(np.abs(targets).max()) > bound + 1e-9:
        raise InvariantViolation(
            f"TD target {np.abs(targets).max():.6f} exceeds bound {bound:.6f}")

    values, cache = forward_batch(robot, frames, params, want_cache=True)
    errors = values - targets
    loss = float(np.mean(errors ** 2))
    grads = backward_batch(params, cache, 2.0 * errors / len(errors))
    params.data -= config.lr_train * grads.data
    return loss


# ---------------------------------------------------------------------------
# Episode rollout machinery

class EpisodeTrace(NamedTuple):
    stream: np.ndarray     # (T-1+steps+1, N, F) frame stream, window-ready
    robots: np.ndarray     # (steps+1, 9)
    rewards: np.ndarray    # (steps,)
    outcome: str           # success | collision | timeout
    steps: int


_OUTCOME_OF_EVENT = {"goal": "success", "collision": "collision", "timeout": "timeout"}


class _WindowView:
    """Adapter giving `LookaheadPolicy` the history interface over a stream
    slice without copying."""

    __slots__ = ("frames",)

    def __init__(self, frames: np.ndarray):
        self.frames = frames

    def with_frame(self, frame: np.ndarray) -> np.ndarray:
        return np.concatenate([self.frames[:, 1:, :], frame[:, None, :]], axis=1)


def rollout_episode(config: TrainConfig, world: World, act,
                    on_step=None) -> EpisodeTrace:
    """Run one episode to its terminal event (the timeout guarantees one).

    `act(joint_state, window_view, t)` returns the robot command for step t.
    The optional hook `on_step(t, reward, terminal, stream, robots)` fires
    after each step, once the stream rows for states t and t+1 are written,
    so callers can push transitions and learn online.
    """
    apg_cfg = config.apg_config()
    reward_cfg = config.reward_config()
    n = len(world.pedestrians)
    width = apg_cfg.frame_width
    t_len = config.history_len
    max_steps = config.max_steps

    stream = np.empty((t_len - 1 + max_steps + 1, n, width))
    robots = np.empty((max_steps + 1, 9))
    rewards = np.empty(max_steps)
    robot_pos = world.robot.position if apg_cfg.include_robot else None
    stream[0:t_len] = frame_features(world.pedestrians, apg_cfg, robot_pos)
    robots[0] = world.robot.features()

    outcome = "timeout"
    steps = max_steps
    for t in range(max_steps):
        joint = world.joint_state()
        window = _WindowView(stream[t:t + t_len].transpose(1, 0, 2))
        action = act(joint, window, t)
        world, events = step(world, action)
        terms = total_reward(world.joint_state(), events, reward_cfg)
        rewards[t] = terms.total
        robot_pos = world.robot.position if apg_cfg.include_robot else None
        stream[t_len + t] = frame_features(world.pedestrians, apg_cfg, robot_pos)
        robots[t + 1] = world.robot.features()
        if on_step is not None:
            on_step(t, float(rewards[t]), events.terminal, stream, robots)
        if events.terminal:
            outcome = _OUTCOME_OF_EVENT[world.event]
            steps = t + 1
            break
    return EpisodeTrace(stream=stream[:t_len - 1 + steps + 1],
                        robots=robots[:steps + 1], rewards=rewards[:steps],
                        outcome=outcome, steps=steps)


def discounted_return(rewards: np.ndarray, step_discount: float) -> float:
    """Realized return with the first step's reward undiscounted."""
    total = 0.0
    for r in rewards[::-1]:
        total = r + step_discount * total
    return float(total)


def orca_robot_action(joint_state, world_config) -> VelocityAction:
    """The demonstration/baseline controller: apply the reciprocal-avoidance
    velocity directly (holonomic execution)."""
    velocity = orca_step(joint_state.robot, joint_state.pedestrians,
                         world_config.orca, world_config.dt)
    return VelocityAction(velocity.x, velocity.y)


# ---------------------------------------------------------------------------
# Pre-training on ORCA demonstrations

class DemoSet(NamedTuple):
    traces: list
    returns: list  # per-trace (steps,) return-to-go arrays


def collect_demos(config: TrainConfig, n_episodes: int,
                  seed_seq: np.random.SeedSequence) -> DemoSet:
    """Episodes with an ORCA-driven (holonomic) robot; every visited state
    gets the discounted return-to-go of the realized rewards as its
    regression target."""
    if n_episodes < 1:
        raise ConfigurationError("pre-training needs at least one demo episode")
    traces = []
    targets = []
    world_cfg = config.world_config()
    for child in seed_seq.spawn(n_episodes):
        rng = np.random.default_rng(child)
        world = generate_circle_crossing(world_cfg, rng)
        trace = rollout_episode(
            config, world, lambda js, window, t: orca_robot_action(js, world_cfg))
        back = np.empty(trace.steps)
        acc = 0.0
        for i in range(trace.steps - 1, -1, -1):
            acc = trace.rewards[i] + config.step_discount * acc
            back[i] = acc
        traces.append(trace)
        targets.append(back)
    return DemoSet(traces=traces, returns=targets)


def _demo_batch(demos: DemoSet, pairs, config: TrainConfig):
    t_len = config.history_len
    frames = np.stack([demos.traces[e].stream[t:t + t_len] for e, t in pairs])
    frames = frames.transpose(0, 2, 1, 3)
    robot = np.stack([demos.traces[e].robots[t] for e, t in pairs])
    targets = np.array([demos.returns[e][t] for e, t in pairs])
    return _order_frames(frames, robot), robot, targets


def pretrain(demos: DemoSet, params: NetworkParams, config: TrainConfig,
             rng: np.random.Generator) -> dict:
    """MSE regression of V against demo return-to-go targets; 10% of the
    state pool is held out for reporting. Returns fit statistics."""
    pairs = [(e, t) for e, trace in enumerate(demos.traces)
             for t in range(trace.steps)]
    if not pairs:
        raise ConfigurationError("demo set contains no states")
    order = rng.permutation(len(pairs))
    holdout_count = len(pairs) // 10
    holdout = [pairs[i] for i in order[:holdout_count]]
    train = [pairs[i] for i in order[holdout_count:]]

    def mse_of(sample_pairs) -> float:
        total = 0.0
        for start in range(0, len(sample_pairs), config.batch_size):
            chunk = sample_pairs[start:start + config.batch_size]
            frames, robot, targets = _demo_batch(demos, chunk, config)
            values, _ = forward_batch(robot, frames, params)
            total += float(((values - targets) ** 2).sum())
        return total / len(sample_pairs)

    zero_mse = (float(np.mean([demos.returns[e][t] ** 2 for e, t in holdout]))
                if holdout else math.nan)
    loss = math.nan
    for _ in range(config.pretrain_epochs):
        epoch_order = rng.permutation(len(train))
        for start in range(0, len(train), config.batch_size):
            chunk = [train[i] for i in epoch_order[start:start + config.batch_size]]
            frames, robot, targets = _demo_batch(demos, chunk, config)
            values, cache = forward_batch(robot, frames, params, want_cache=True)
            errors = values - targets
            loss = float(np.mean(errors ** 2))
            grads = backward_batch(params, cache, 2.0 * errors / len(errors))
            params.data -= config.lr_pretrain * grads.data
    return {
        "n_states": len(pairs),
        "n_holdout": holdout_count,
        "final_batch_mse": loss,
        "holdout_mse": mse_of(holdout) if holdout else math.nan,
        "zero_baseline_mse": zero_mse,
    }


# ---------------------------------------------------------------------------
# The full training pipeline

class CurveRow(NamedTuple):
    episode: int
    episode_return: float
    outcome: str
    steps: int
    epsilon: float


class TrainResult(NamedTuple):
    params: NetworkParams
    curve: list
    pretrain_stats: dict


def run_training(config: TrainConfig, out_dir=None, progress=None,
                 initial_params: NetworkParams | None = None) -> TrainResult:
    """Pre-training followed by epsilon-greedy TD learning; fully seeded.

    Writes `pretrain.ckpt`, periodic `checkpoint_<episode>.ckpt`, `final.ckpt`
    and an incrementally flushed `curve.csv` under `out_dir` when given.
    `initial_params` skips demo collection and pre-training.
    """
    root = np.random.SeedSequence(config.seed)
    ss_init, ss_demo, ss_pretrain, ss_rl = root.spawn(4)

    if initial_params is None:
        params = NetworkParams.init(config.apg_sectors, config.history_len,
                                    np.random.default_rng(ss_init)).astype(config.dtype)
        if progress:
            progress(f"collecting {config.pretrain_episodes} demonstration episodes")
        demos = collect_demos(config, config.pretrain_episodes, ss_demo)
        if progress:
            n_states = sum(t.steps for t in demos.traces)
            progress(f"pre-training on {n_states} states for "
                     f"{config.pretrain_epochs} epochs")
        stats = pretrain(demos, params, config, np.random.default_rng(ss_pretrain))
        if progress:
            progress(f"pre-training done: holdout MSE {stats['holdout_mse']:.5f} "
                     f"(zero baseline {stats['zero_baseline_mse']:.5f})")
        del demos
    else:
        if initial_params.sectors != config.apg_sectors:
            raise ConfigurationError(
                f"checkpoint has {initial_params.sectors} sectors, config wants "
                f"{config.apg_sectors}")
        params = initial_params.astype(config.dtype)
        stats = {}

    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        params.save(os.path.join(out_dir, "pretrain.ckpt"))

    target = sync_target(params)
    buffer = ReplayBuffer(config.buffer_capacity)
    rng = np.random.default_rng(ss_rl)
    episode_seeds = ss_rl.spawn(config.train_episodes)
    action_space = ActionSpace.build(config.v_pref)
    policy = LookaheadPolicy(params, action_space, config)
    world_cfg = config.world_config()
    t_len = config.history_len

    curve: list[CurveRow] = []
    grad_steps = 0
    last_index = 0
    curve_fh = (open(os.path.join(out_dir, "curve.csv"), "w", encoding="utf-8")
                if out_dir is not None else None)
    if curve_fh:
        curve_fh.write("episode,return,outcome,steps,epsilon\n")

    def on_step(t, reward, terminal, stream, robots):
        nonlocal grad_steps, target
        buffer.push(Transition(
            frames=stream[t:t + t_len], robot=robots[t], action=last_index,
            reward=reward, next_frames=stream[t + 1:t + 1 + t_len],
            next_robot=robots[t + 1], terminal=terminal))
        loss = train_step(buffer, params, target, config, rng)
        if loss is not None:
            grad_steps += 1
            if grad_steps % config.target_sync_interval == 0:
                target = sync_target(params)

    try:
        for episode in range(config.train_episodes):
            eps = epsilon_schedule(episode, config)
            world = generate_circle_crossing(
                world_cfg, np.random.default_rng(episode_seeds[episode]))

            def act(joint, window, t):
                nonlocal last_index
                last_index = policy.act(joint, window, eps, rng)
                return action_space.actions[last_index]

            trace = rollout_episode(config, world, act, on_step)
            row = CurveRow(episode=episode,
                           episode_return=discounted_return(trace.rewards,
                                                            config.step_discount),
                           outcome=trace.outcome, steps=trace.steps, epsilon=eps)
            curve.append(row)
            if curve_fh:
                curve_fh.write(f"{row.episode},{row.episode_return:.12g},"
                               f"{row.outcome},{row.steps},{row.epsilon:.12g}\n")
                curve_fh.flush()
            if out_dir is not None and (episode + 1) % config.checkpoint_every == 0:
                params.save(os.path.join(out_dir, f"checkpoint_{episode + 1:06d}.ckpt"))
            if progress and (episode + 1) % 100 == 0:
                recent = curve[-100:]
                rate = sum(r.outcome == "success" for r in recent) / len(recent)
                progress(f"episode {episode + 1}/{config.train_episodes} "
                         f"eps={eps:.3f} recent success {rate:.2f} "
                         f"grad steps {grad_steps}")
    finally:
        if curve_fh:
            curve_fh.close()

    if out_dir is not None:
        params.save(os.path.join(out_dir, "final.ckpt"))
    return TrainResult(params=params, curve=curve, pretrain_stats=stats)
