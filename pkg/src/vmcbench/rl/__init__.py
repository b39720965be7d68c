"""Reinforcement learning: advantage estimation, replay, and two trainers."""

from .evaluation import evaluate_policy, reference_returns, run_stacked_episode
from .gae import compute_gae, n_step_return
from .offpolicy import (
    OffPolicyConfig,
    OffPolicyResult,
    OffPolicyTrainer,
    train_offpolicy,
)
from .onpolicy import (
    OnPolicyConfig,
    OnPolicyResult,
    OnPolicyTrainer,
    RolloutBatch,
    train_onpolicy,
)
from .replay import ReplayBuffer
from .rollout import EnvPool, Transition, collect_rollout

__all__ = [
    "EnvPool",
    "OffPolicyConfig",
    "OffPolicyResult",
    "OffPolicyTrainer",
    "OnPolicyConfig",
    "OnPolicyResult",
    "OnPolicyTrainer",
    "ReplayBuffer",
    "RolloutBatch",
    "Transition",
    "collect_rollout",
    "compute_gae",
    "evaluate_policy",
    "n_step_return",
    "reference_returns",
    "run_stacked_episode",
    "train_offpolicy",
    "train_onpolicy",
]
