"""Scripted expert and demonstration generation."""

from __future__ import annotations

import numpy as np

from ..core.rng import RNGPolicy
from ..core.types import DemoDataset, EpisodeRecord
from ..errors import ExpertFailureError, InsufficientDataError
from .env import Environment


def scripted_expert(env: Environment) -> np.ndarray:
    """Bounded proportional controller toward the goal.

    Commands the velocity that would land on the goal this step, clipped
    per component to the action bounds; at the goal it outputs zero.
    """
    state = env.get_state()
    while "base" in state:  # appearance wrappers nest the dynamical state
        state = state["base"]
    delta = np.asarray(state["goal"]) - np.asarray(state["agent"])
    return np.clip(delta / env.max_step, -1.0, 1.0).astype(np.float32)


def rollout_episode(env: Environment, policy_fn, episode_seed: int) -> EpisodeRecord:
    """Run one episode; returns the (obs_t, a_t, r_t) record.

    Observations are the frames the action was chosen from, so behavior
    cloning pairs align.
    """
    obs = env.reset(episode_seed)
    frames, actions, rewards = [], [], []
    done = False
    success = False
    while not done:
        a = np.asarray(policy_fn(env, obs), dtype=np.float32)
        frames.append(obs)
        actions.append(a)
        obs, r, done, info = env.step(a)
        rewards.append(r)
        success = bool(info["success"])
    return EpisodeRecord(
        observations=np.stack(frames),
        actions=np.stack(actions),
        rewards=np.asarray(rewards, dtype=np.float32),
        success=success,
    )


def generate_demos(env: Environment, count: int, seed: int,
                   task_id: str = "reach") -> DemoDataset:
    """Collect ``count`` successful expert episodes.

    Failed episodes are discarded and re-rolled with fresh derived seeds.
    If ``count`` successes have not arrived within 4 * count attempts the
    expert is considered broken and an ExpertFailureError is raised rather
    than silently padding with failures.
    """
    if count < 1:
        raise InsufficientDataError(f"demo count must be >= 1, got {count}")
    rng = RNGPolicy(seed)
    episodes = []
    attempts = 0
    max_attempts = 4 * count
    while len(episodes) < count:
        if attempts >= max_attempts:
            rate = len(episodes) / attempts
            raise ExpertFailureError(
                f"expert produced {len(episodes)}/{count} demos in {attempts} "
                f"attempts (success rate {rate:.2f})"
            )
        ep_seed = rng.child_seed("demos/episode", attempts)
        attempts += 1
        record = rollout_episode(env, lambda e, o: scripted_expert(e), ep_seed)
        if record.success:
            episodes.append(record)
    return DemoDataset(tuple(episodes), task_id=task_id)
