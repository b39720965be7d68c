"""Environment pools and rollout collection.

Episode seeds derive from (stream, env slot, per-slot episode index), so a
transition's identity never depends on scheduling. Collecting with one env
or eight yields the same per-slot episode streams; faulted episodes are
discarded whole and logged, never silently truncated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from ..core.rng import RNGPolicy
from ..envdata.env import Environment
from ..errors import InvalidParameterError

log = logging.getLogger(__name__)


@dataclass
class Transition:
    env_id: int
    episode_index: int
    t: int
    obs: np.ndarray      # stacked uint8 [T*C, H, W], frame the action saw
    action: np.ndarray
    reward: float
    done: bool
    success: bool


class EnvPool:
    """Fixed set of environment slots with derived per-episode seeds."""

    def __init__(self, factory, n: int, rng: RNGPolicy, stack_depth: int = 1,
                 stream: str = "rollout", env_streams: list[str] | None = None):
        if n < 1:
            raise InvalidParameterError(f"pool needs >= 1 envs, got {n}")
        if env_streams is not None and len(env_streams) != n:
            raise InvalidParameterError(
                f"env_streams has {len(env_streams)} entries for {n} envs"
            )
        self.envs: list[Environment] = [factory() for _ in range(n)]
        self.n = n
        self.rng = rng
        self.stream = stream
        # per-slot seed streams; overridable so a single-env pool can replay
        # one slot of a wider pool exactly
        self.env_streams = env_streams or [f"{stream}/env{i}" for i in range(n)]
        self.stack_depth = stack_depth
        self.episode_index = [-1] * n
        self.step_in_episode = [0] * n
        self._stacks: list[list[np.ndarray]] = [[] for _ in range(n)]
        self._live = [False] * n

    def episode_seed(self, env_id: int, episode_index: int) -> int:
        return self.rng.child_seed(self.env_streams[env_id], episode_index)

    def begin_episode(self, env_id: int) -> np.ndarray:
        self.episode_index[env_id] += 1
        seed = self.episode_seed(env_id, self.episode_index[env_id])
        obs = self.envs[env_id].reset(seed)
        self.step_in_episode[env_id] = 0
        self._stacks[env_id] = [obs] * self.stack_depth
        self._live[env_id] = True
        return obs

    def stacked_obs(self, env_id: int) -> np.ndarray:
        return np.concatenate(self._stacks[env_id], axis=0)

    def step(self, env_id: int, action: np.ndarray):
        obs, reward, done, info = self.envs[env_id].step(action)
        self._stacks[env_id] = self._stacks[env_id][1:] + [obs]
        self.step_in_episode[env_id] += 1
        if done:
            self._live[env_id] = False
        return obs, reward, done, info

    def proprio(self, env_id: int) -> np.ndarray:
        return self.envs[env_id].proprio()

    def is_live(self, env_id: int) -> bool:
        return self._live[env_id]

    def state_dict(self) -> dict:
        return {
            "episode_index": list(self.episode_index),
            "step_in_episode": list(self.step_in_episode),
            "live": list(self._live),
            "envs": [env.get_state() for env in self.envs],
            "stacks": [[np.asarray(f).copy() for f in s] for s in self._stacks],
        }

    def load_state_dict(self, state: dict) -> None:
        self.episode_index = [int(x) for x in state["episode_index"]]
        self.step_in_episode = [int(x) for x in state["step_in_episode"]]
        self._live = [bool(x) for x in state["live"]]
        for env, s in zip(self.envs, state["envs"]):
            env.set_state(s)
        self._stacks = [[np.asarray(f) for f in s] for s in state["stacks"]]


def collect_rollout(policy_fn, pool: EnvPool, steps: int) -> list[Transition]:
    """Step the pool round-robin until ``steps`` transitions are kept.

    ``policy_fn(env, stacked_obs) -> action``. A raised exception inside an
    environment discards that episode's transitions entirely, logs the
    fault, and moves the slot to a fresh episode.
    """
    if steps < 0:
        raise InvalidParameterError(f"steps must be >= 0, got {steps}")
    kept: list[Transition] = []
    pending: list[list[Transition]] = [[] for _ in range(pool.n)]
    total = 0
    while total < steps:
        for env_id in range(pool.n):
            if total >= steps:
                break
            if not pool.is_live(env_id):
                pool.begin_episode(env_id)
            obs = pool.stacked_obs(env_id)
            t = pool.step_in_episode[env_id]
            action = np.asarray(policy_fn(pool.envs[env_id], obs), dtype=np.float32)
            try:
                _, reward, done, info = pool.step(env_id, action)
            except Exception:
                log.warning(
                    "environment %d faulted in episode %d; discarding %d transitions",
                    env_id, pool.episode_index[env_id], len(pending[env_id]),
                    exc_info=True,
                )
                total -= len(pending[env_id])
                pending[env_id] = []
                pool._live[env_id] = False
                continue
            pending[env_id].append(Transition(
                env_id=env_id, episode_index=pool.episode_index[env_id], t=t,
                obs=obs, action=action, reward=float(reward), done=bool(done),
                success=bool(info.get("success", False)),
            ))
            total += 1
            if done:
                kept.extend(pending[env_id])
                pending[env_id] = []
    for env_id in range(pool.n):
        kept.extend(pending[env_id])
    return kept
