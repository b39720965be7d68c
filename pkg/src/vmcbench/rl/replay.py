"""Episode-aware replay with n-step windows and counter-based sampling.

Episodes are stored whole, so n-step windows never cross episode
boundaries. Sampling is addressed by the update index: update k draws the
same transitions no matter how many episodes arrived since, as long as the
buffer contents match, which they do on an exact-resume replay.
"""

from __future__ import annotations

import numpy as np

from ..core.rng import RNGPolicy
from ..errors import InsufficientDataError, InvalidParameterError, ShapeError


class _Episode:
    __slots__ = ("frames", "actions", "rewards", "terminal", "length")

    def __init__(self, frames, actions, rewards, terminal):
        self.frames = frames
        self.actions = actions
        self.rewards = rewards
        self.terminal = terminal
        self.length = actions.shape[0]


class ReplayBuffer:
    """FIFO transition store over whole episodes."""

    def __init__(self, capacity: int, n_step: int, gamma: float, stack_depth: int,
                 rng: RNGPolicy, stream: str = "replay"):
        if capacity < 1:
            raise InvalidParameterError(f"capacity must be >= 1, got {capacity}")
        if n_step < 1:
            raise InvalidParameterError(f"n_step must be >= 1, got {n_step}")
        if not 0.0 <= gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {gamma}")
        self.capacity = capacity
        self.n_step = n_step
        self.gamma = gamma
        self.stack_depth = stack_depth
        self.rng = rng
        self.stream = stream
        self._episodes: list[_Episode] = []
        self._count = 0
        self._index_dirty = True
        self._ep_of: np.ndarray | None = None
        self._t_of: np.ndarray | None = None

    def __len__(self) -> int:
        return self._count

    def add_episode(self, frames: np.ndarray, actions: np.ndarray,
                    rewards: np.ndarray, terminal: bool) -> None:
        """Store one episode. ``frames`` holds L+1 observations (including
        the one after the final transition); ``terminal`` marks a true
        episode end rather than a horizon truncation."""
        length = actions.shape[0]
        if frames.shape[0] != length + 1:
            raise ShapeError(
                f"episode needs L+1 frames for L = {length} transitions, "
                f"got {frames.shape[0]}"
            )
        if rewards.shape[0] != length:
            raise ShapeError("rewards length does not match actions")
        self._episodes.append(_Episode(
            np.ascontiguousarray(frames), np.ascontiguousarray(actions, dtype=np.float32),
            np.ascontiguousarray(rewards, dtype=np.float32), bool(terminal),
        ))
        self._count += length
        while self._count > self.capacity and len(self._episodes) > 1:
            dropped = self._episodes.pop(0)
            self._count -= dropped.length
        self._index_dirty = True

    def _rebuild_index(self) -> None:
        eps, ts = [], []
        for e, ep in enumerate(self._episodes):
            eps.append(np.full(ep.length, e, dtype=np.int64))
            ts.append(np.arange(ep.length, dtype=np.int64))
        self._ep_of = np.concatenate(eps) if eps else np.empty(0, dtype=np.int64)
        self._t_of = np.concatenate(ts) if ts else np.empty(0, dtype=np.int64)
        self._index_dirty = False

    def _stack(self, ep: _Episode, t: int) -> np.ndarray:
        idx = np.maximum(np.arange(t - self.stack_depth + 1, t + 1), 0)
        f = ep.frames[idx]
        return f.reshape(-1, *f.shape[2:])

    def sample(self, batch_size: int, update_index: int) -> dict:
        """Draw a batch addressed by ``update_index``.

        Returns stacked current and n-step-ahead observations, first
        actions, discounted n-step reward sums, and the residual discounts
        (zero where the window ends the episode for real).
        """
        if self._count < batch_size:
            raise InsufficientDataError(
                f"replay holds {self._count} transitions, batch needs {batch_size}"
            )
        if self._index_dirty:
            self._rebuild_index()
        counters = update_index * batch_size + np.arange(batch_size, dtype=np.int64)
        flat = self.rng.integers(f"{self.stream}/sample", counters, 0, self._count)
        obs = []
        next_obs = []
        actions = np.empty((batch_size, self._episodes[0].actions.shape[1]), dtype=np.float32)
        rewards = np.empty(batch_size, dtype=np.float32)
        discounts = np.empty(batch_size, dtype=np.float32)
        for b, i in enumerate(flat):
            ep = self._episodes[self._ep_of[i]]
            t = int(self._t_of[i])
            m = min(self.n_step, ep.length - t)
            total = 0.0
            g = 1.0
            for k in range(m):
                total += g * float(ep.rewards[t + k])
                g *= self.gamma
            ends_episode = (t + m == ep.length) and ep.terminal
            obs.append(self._stack(ep, t))
            next_obs.append(self._stack(ep, t + m))
            actions[b] = ep.actions[t]
            rewards[b] = total
            discounts[b] = 0.0 if ends_episode else g
        return {
            "obs": np.stack(obs),
            "next_obs": np.stack(next_obs),
            "actions": actions,
            "rewards": rewards,
            "discounts": discounts,
        }

    def state_dict(self) -> dict:
        return {
            "episodes": [
                {"frames": ep.frames, "actions": ep.actions, "rewards": ep.rewards,
                 "terminal": ep.terminal}
                for ep in self._episodes
            ],
        }

    def load_state_dict(self, state: dict) -> None:
        self._episodes = []
        self._count = 0
        for ep in state["episodes"]:
            self._episodes.append(_Episode(ep["frames"], ep["actions"], ep["rewards"],
                                           bool(ep["terminal"])))
            self._count += self._episodes[-1].length
        self._index_dirty = True
