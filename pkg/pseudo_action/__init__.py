from .config import RunConfig, parse_config, config_diff
from .dqn import DqnAgent, EmbeddingTable, EpsilonSchedule
from .envs import (
    DynamicsEnv,
    EnvSpec,
    EnvStepTransition,
    FrameStack,
    Pendulum,
    PushBar,
    RepeatRollout,
    rollout_with_repeats,
)
from .harness import RngStreams, compare_runs, evaluate_policy, run_experiment
from .modes import Algo, RunMode, SampleMode
from .replay import PseudoBatch, ReplayBuffer, sample_batch, valid_start_indices
from .sac import SacAgent
from .trainer import train_step
from .checkpoint import load_checkpoint, save_checkpoint
from .verifier import (
    PiecewiseSchedule,
    gap_vs_action_difference,
    pseudo_action_gap,
    pseudo_action_of,
    rollout_endpoint,
    scaling_exponent,
)

from .errors import (
    PseudoActionError,
    ConfigurationError,
    ContractViolationError,
    InsufficientDataError,
    IntegrityError,
    NonFiniteError,
    TrainingDivergedError,
)
from .qol import make_agent, make_env, make_episode


__all__ = [
    # agents and training
    "SacAgent",
    "DqnAgent",
    "EmbeddingTable",
    "EpsilonSchedule",
    "train_step",
    "save_checkpoint",
    "load_checkpoint",
    # environments and replay
    "EnvSpec",
    "EnvStepTransition",
    "Pendulum",
    "PushBar",
    "DynamicsEnv",
    "FrameStack",
    "RepeatRollout",
    "rollout_with_repeats",
    "ReplayBuffer",
    "PseudoBatch",
    "sample_batch",
    "valid_start_indices",
    # experiments
    "RunConfig",
    "parse_config",
    "config_diff",
    "RngStreams",
    "run_experiment",
    "evaluate_policy",
    "compare_runs",
    # verifier
    "PiecewiseSchedule",
    "pseudo_action_of",
    "rollout_endpoint",
    "pseudo_action_gap",
    "scaling_exponent",
    "gap_vs_action_difference",
    # modes
    "Algo",
    "RunMode",
    "SampleMode",
    # errors
    "PseudoActionError",
    "ConfigurationError",
    "ContractViolationError",
    "InsufficientDataError",
    "IntegrityError",
    "NonFiniteError",
    "TrainingDivergedError",
    # qol features
    "make_env",
    "make_agent",
    "make_episode",
]

__author__ = "fresh-milkshake"
__license__ = "MIT"
__description__ = "Off-policy RL with pseudo-action replay: train Q-networks on the frames between action-decision points."
