"""Synthetic reach environment with layer-decomposed rendering.

The observation is composed from three layers: a procedural background
texture, a goal disc, and an agent disc, each with per-pixel coverage
weights. Perturbation wrappers recomposite the same weights with different
colors or backgrounds, so changing appearance provably cannot touch
dynamics, reward, or success.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..core.rng import RNGPolicy
from ..errors import ConfigurationError, EpisodeDoneError
from ..imageops import to_uint8
from ..noise import value_noise

# layer order: background, then goal disc, then agent disc on top
GOAL_LAYER = 0
AGENT_LAYER = 1


@dataclass
class LayerDecomposition:
    """Rendering state: background, disc coverage weights, disc colors."""

    background: np.ndarray  # [3, H, W] float64 in [0, 1]
    weights: np.ndarray     # [2, H, W] float64 coverage, goal then agent
    colors: np.ndarray      # [2, 3] float64 in [0, 1]


def compose_layers(layers: LayerDecomposition) -> np.ndarray:
    """Alpha-composite background and discs to a uint8 [3, H, W] frame.

    Discs paint in layer order, so the agent occludes the goal where they
    overlap. Keeping this the single composition path is what makes
    wrapped and unwrapped frames bitwise comparable.
    """
    img = layers.background
    for i in range(layers.weights.shape[0]):
        w = layers.weights[i][None, :, :]
        img = img * (1.0 - w) + layers.colors[i][:, None, None] * w
    return to_uint8(img)


class Environment:
    """Minimal episodic environment interface used across the package."""

    frame_shape: tuple[int, int, int]
    action_dim: int
    horizon: int
    proprio_dim: int

    def reset(self, seed: int) -> np.ndarray:
        raise NotImplementedError

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        raise NotImplementedError

    def proprio(self) -> np.ndarray:
        raise NotImplementedError

    def get_state(self) -> dict:
        raise NotImplementedError

    def set_state(self, state: dict) -> None:
        raise NotImplementedError


class SyntheticReachEnv(Environment):
    """Reach a goal disc in the unit square under bounded 2-D velocity.

    The agent (small red disc) and goal (larger green disc) spawn at random
    positions over a textured background. Actions are clipped to [-1, 1]^2
    and scaled by ``max_step``. Reward is the negative Euclidean distance,
    success is distance below ``success_threshold``, and episodes end on
    success or after ``horizon`` steps. The two discs differ in size as
    well as color, so identity survives color randomization.
    """

    def __init__(
        self,
        resolution: int = 84,
        horizon: int = 50,
        success_threshold: float = 0.05,
        max_step: float = 0.08,
        agent_radius: float = 0.06,
        goal_radius: float = 0.10,
        texture_seed: int = 0,
    ):
        if resolution < 8:
            raise ConfigurationError(f"resolution must be >= 8, got {resolution}")
        if horizon < 1:
            raise ConfigurationError(f"horizon must be >= 1, got {horizon}")
        self.resolution = resolution
        self.frame_shape = (3, resolution, resolution)
        self.action_dim = 2
        self.proprio_dim = 2
        self.horizon = horizon
        self.success_threshold = success_threshold
        self.max_step = max_step
        self.agent_radius = agent_radius
        self.goal_radius = goal_radius
        self.texture_seed = texture_seed
        self._colors = np.array([[0.15, 0.80, 0.25],   # goal: green
                                 [0.90, 0.20, 0.15]])  # agent: red
        tex = value_noise(RNGPolicy(texture_seed), "env/background",
                          resolution, resolution, channels=3, octaves=3, base_cells=4)
        self._background = 0.25 + 0.30 * tex
        # pixel-center coordinates in unit space, shared by both discs
        centers = (np.arange(resolution) + 0.5) / resolution
        self._px = np.broadcast_to(centers[None, :], (resolution, resolution))
        self._py = np.broadcast_to(centers[:, None], (resolution, resolution))
        self._agent = np.zeros(2)
        self._goal = np.zeros(2)
        self._t = 0
        self._done = True
        self._needs_reset = True

    def reset(self, seed: int) -> np.ndarray:
        rng = RNGPolicy(int(seed)).generator("env/reset")
        margin = self.goal_radius
        span = 1.0 - 2.0 * margin
        self._agent = margin + span * rng.random(2)
        # keep the goal clearly separated so episodes never start solved
        min_sep = 2.0 * self.success_threshold + self.agent_radius + self.goal_radius
        while True:
            self._goal = margin + span * rng.random(2)
            if np.linalg.norm(self._goal - self._agent) >= min_sep:
                break
        self._t = 0
        self._done = False
        self._needs_reset = False
        return self.observation()

    def step(self, action: np.ndarray) -> tuple[np.ndarray, float, bool, dict]:
        if self._needs_reset or self._done:
            raise EpisodeDoneError("episode finished; call reset before stepping")
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(2), -1.0, 1.0)
        self._agent = np.clip(self._agent + a * self.max_step, 0.0, 1.0)
        self._t += 1
        dist = float(np.linalg.norm(self._agent - self._goal))
        reward = -dist
        success = dist < self.success_threshold
        self._done = success or self._t >= self.horizon
        return self.observation(), reward, self._done, {"success": success, "distance": dist}

    def proprio(self) -> np.ndarray:
        return self._agent.astype(np.float32)

    def render_layers(self) -> LayerDecomposition:
        weights = np.stack([
            self._disc_coverage(self._goal, self.goal_radius),
            self._disc_coverage(self._agent, self.agent_radius),
        ])
        return LayerDecomposition(self._background, weights, self._colors)

    def observation(self) -> np.ndarray:
        return compose_layers(self.render_layers())

    def _disc_coverage(self, center: np.ndarray, radius: float) -> np.ndarray:
        """Antialiased coverage in [0, 1]: linear falloff over one pixel."""
        px = 1.0 / self.resolution
        d = np.sqrt((self._px - center[0]) ** 2 + (self._py - center[1]) ** 2)
        return np.clip((radius + 0.5 * px - d) / px, 0.0, 1.0)

    def get_state(self) -> dict:
        return {
            "agent": self._agent.copy(),
            "goal": self._goal.copy(),
            "t": self._t,
            "done": self._done,
            "needs_reset": self._needs_reset,
        }

    def set_state(self, state: dict) -> None:
        self._agent = np.asarray(state["agent"], dtype=np.float64).copy()
        self._goal = np.asarray(state["goal"], dtype=np.float64).copy()
        self._t = int(state["t"])
        self._done = bool(state["done"])
        self._needs_reset = bool(state["needs_reset"])


def make_env(resolution: int = 84, horizon: int = 50, texture_seed: int = 0,
             **kwargs) -> SyntheticReachEnv:
    return SyntheticReachEnv(resolution=resolution, horizon=horizon,
                             texture_seed=texture_seed, **kwargs)
