"""Appearance-perturbation wrappers.

Wrappers delegate all dynamics to the base environment and only recomposite
the rendered frame from its layer decomposition. Rewards, success flags,
and internal state are untouched by construction.
"""

from __future__ import annotations

import numpy as np

from ..core.rng import RNGPolicy
from ..errors import InvalidParameterError, UnsupportedEnvironmentError
from ..noise import value_noise
from .env import Environment, LayerDecomposition, compose_layers


def _require_layers(env: Environment) -> None:
    if not hasattr(env, "render_layers"):
        raise UnsupportedEnvironmentError(
            f"{type(env).__name__} does not expose a layer decomposition; "
            "appearance wrappers need render_layers()"
        )


class _AppearanceWrapper(Environment):
    """Base: forward everything, re-render observations from layers."""

    def __init__(self, env: Environment, seed: int):
        _require_layers(env)
        self.env = env
        self.seed = seed
        self.rng = RNGPolicy(seed)
        self.frame_shape = env.frame_shape
        self.action_dim = env.action_dim
        self.horizon = env.horizon
        self.proprio_dim = env.proprio_dim
        self._episode = -1
        self._step = 0

    # dynamics passthrough
    @property
    def max_step(self):
        return self.env.max_step

    @property
    def success_threshold(self):
        return self.env.success_threshold

    def proprio(self) -> np.ndarray:
        return self.env.proprio()

    def get_state(self) -> dict:
        return {
            "base": self.env.get_state(),
            "episode": self._episode,
            "step": self._step,
        }

    def set_state(self, state: dict) -> None:
        self.env.set_state(state["base"])
        self._episode = int(state["episode"])
        self._step = int(state["step"])
        # appearance draws are pure functions of the episode counter, so
        # re-deriving them restores the look without storing it
        if self._episode >= 0:
            self._on_episode_start()

    def reset(self, seed: int) -> np.ndarray:
        self.env.reset(seed)
        self._episode += 1
        self._step = 0
        self._on_episode_start()
        return self.observation()

    def step(self, action: np.ndarray):
        _, reward, done, info = self.env.step(action)
        self._step += 1
        return self.observation(), reward, done, info

    def observation(self) -> np.ndarray:
        return compose_layers(self._perturb(self.env.render_layers()))

    def render_layers(self) -> LayerDecomposition:
        return self._perturb(self.env.render_layers())

    def _on_episode_start(self) -> None:
        pass

    def _perturb(self, layers: LayerDecomposition) -> LayerDecomposition:
        raise NotImplementedError


def _rgb_to_hsv_one(c: np.ndarray) -> tuple[float, float, float]:
    r, g, b = float(c[0]), float(c[1]), float(c[2])
    mx, mn = max(r, g, b), min(r, g, b)
    d = mx - mn
    if d == 0.0:
        h = 0.0
    elif mx == r:
        h = ((g - b) / d) % 6.0 / 6.0
    elif mx == g:
        h = (((b - r) / d) + 2.0) / 6.0
    else:
        h = (((r - g) / d) + 4.0) / 6.0
    s = 0.0 if mx == 0.0 else d / mx
    return h, s, mx


def _hsv_to_rgb_one(h: float, s: float, v: float) -> np.ndarray:
    h = (h % 1.0) * 6.0
    i = int(h) % 6
    f = h - int(h)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    rgb = [(v, t, p), (q, v, p), (p, v, t), (p, q, v), (t, p, v), (v, p, q)][i]
    return np.array(rgb)


class RandomColorWrapper(_AppearanceWrapper):
    """Per-episode random recolor of discs and background tint.

    magnitude in [0, 1] scales the perturbation: hue rotation up to half
    the circle, saturation/value rescale, and per-channel background tint.
    magnitude 0 reproduces the base frames bitwise.
    """

    def __init__(self, env: Environment, seed: int, magnitude: float = 1.0):
        if not 0.0 <= magnitude <= 1.0:
            raise InvalidParameterError(f"magnitude must lie in [0, 1], got {magnitude}")
        super().__init__(env, seed)
        self.magnitude = magnitude
        self._layer_colors: np.ndarray | None = None
        self._bg_tint: np.ndarray | None = None

    def _on_episode_start(self) -> None:
        if self.magnitude == 0.0:
            self._layer_colors = None
            self._bg_tint = None
            return
        m = self.magnitude
        base = self.env.render_layers()
        k = base.colors.shape[0]
        c = np.arange(k, dtype=np.int64) + self._episode * (k + 1)
        hue = (self.rng.uniform("colors/hue", c) - 0.5) * m
        sat = 1.0 + (self.rng.uniform("colors/sat", c) - 0.5) * 1.2 * m
        val = 1.0 + (self.rng.uniform("colors/val", c) - 0.5) * 1.0 * m
        out = np.empty_like(base.colors)
        for i in range(k):
            h, s, v = _rgb_to_hsv_one(base.colors[i])
            out[i] = _hsv_to_rgb_one(h + hue[i], float(np.clip(s * sat[i], 0.0, 1.0)),
                                     float(np.clip(v * val[i], 0.05, 1.0)))
        self._layer_colors = out
        tc = np.arange(3, dtype=np.int64) + self._episode * 3
        self._bg_tint = 1.0 + (self.rng.uniform("colors/bg", tc) - 0.5) * 1.0 * m

    def _perturb(self, layers: LayerDecomposition) -> LayerDecomposition:
        if self._layer_colors is None:
            return layers
        bg = np.clip(layers.background * self._bg_tint[:, None, None], 0.0, 1.0)
        return LayerDecomposition(bg, layers.weights, self._layer_colors)


class VideoBackgroundWrapper(_AppearanceWrapper):
    """Replace the background with a time-varying texture.

    The texture advances every step and jumps to a fresh phase each
    episode; foreground discs are composited unchanged, so any pixel the
    background does not touch is bitwise identical to the base frame.
    An explicit ``frames`` array [T, 3, H, W] (e.g. decoded from a video
    file) is played in a loop instead of the procedural texture.
    """

    def __init__(self, env: Environment, seed: int, frames: np.ndarray | None = None,
                 speed: float = 0.25):
        super().__init__(env, seed)
        self.speed = speed
        self._frames = None
        if frames is not None:
            frames = np.asarray(frames)
            c, h, w = env.frame_shape
            if frames.ndim != 4 or frames.shape[1:] != (3, h, w):
                raise InvalidParameterError(
                    f"background frames must be [T, 3, {h}, {w}], got {frames.shape}"
                )
            self._frames = frames.astype(np.float64)
            if self._frames.max() > 1.0:
                self._frames /= 255.0
        self._phase = 0.0

    def _on_episode_start(self) -> None:
        self._phase = float(self.rng.integers("video/phase", self._episode, 0, 1000)[0])

    def _background_at(self, t: float) -> np.ndarray:
        _, h, w = self.frame_shape
        if self._frames is not None:
            return self._frames[int(t) % self._frames.shape[0]]
        return value_noise(self.rng, "video/texture", h, w, t=t, channels=3,
                           octaves=2, base_cells=3)

    def _perturb(self, layers: LayerDecomposition) -> LayerDecomposition:
        t = self._phase + self.speed * self._step
        return LayerDecomposition(self._background_at(t), layers.weights, layers.colors)


def wrap_random_colors(env: Environment, seed: int, magnitude: float = 1.0) -> RandomColorWrapper:
    return RandomColorWrapper(env, seed, magnitude)


def wrap_video_background(env: Environment, seed: int, frames: np.ndarray | None = None,
                          speed: float = 0.25) -> VideoBackgroundWrapper:
    return VideoBackgroundWrapper(env, seed, frames=frames, speed=speed)
