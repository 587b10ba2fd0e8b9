"""Crowd navigation: a 2D pedestrian world with reciprocal collision
avoidance, an angular-grid + attention value network trained by deep value
learning, and evaluation/plotting tools."""

from .apg import ApgConfig, ObservationHistory, encode_apg, encode_all, \
    frame_features, polar_of, sector_index
from .config import TrainConfig, load_config, save_config
from .errors import ConfigurationError, CrowdNavError, InvariantViolation
from .geometry import Vec2, angle_diff, wrap_angle
from .network import NetworkParams, aggregate_crowd, attention_scores, \
    embed_frame, interaction_features, temporal_pool, value_backward, \
    value_forward
from .orca import HalfPlane, OrcaConfig, orca_halfplane, orca_step, \
    preferred_velocity, solve_velocity_lp
from .reward import RewardConfig, RewardTerms, angular_penalty, base_reward, \
    comfort_indicator, ellipse_minor, social_penalty, to_pedestrian_frame, \
    total_reward
from .simulation import Action, JointState, PedestrianState, RobotState, \
    StepEvents, VelocityAction, World, WorldConfig, generate_circle_crossing, \
    goal_reached, load_scenario, make_world, min_separation, propagate_linear, \
    save_scenario, step
from .training import ActionSpace, LookaheadPolicy, ReplayBuffer, Transition, \
    epsilon_schedule, pretrain, run_training, select_action, sync_target, \
    td_target, train_step

__version__ = "0.1.0"

__all__ = [name for name in dir() if not name.startswith("_")]
