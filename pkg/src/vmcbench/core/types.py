"""Core domain types shared by every module.

All types are immutable after construction (arrays are marked read-only) and
therefore safe to share across concurrent workers.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..errors import ShapeError

UINT8 = "uint8"
UNIT_FLOAT = "unit_float"
_VALUE_DOMAINS = (UINT8, UNIT_FLOAT)

SUCCESS_RATE = "success_rate"
RAW_RETURN = "raw_return"
NORMALIZED_RETURN = "normalized_return"
_METRIC_KINDS = (SUCCESS_RATE, RAW_RETURN, NORMALIZED_RETURN)


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class ObservationBatch:
    """Batched image tensor [N, C, H, W] with value-domain and stack metadata.

    ``stack_depth`` T means each sample is T frames concatenated along the
    channel axis, C = T * base_channels.
    """

    data: np.ndarray
    value_domain: str = UINT8
    stack_depth: int = 1

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ShapeError(f"expected [N, C, H, W], got shape {self.data.shape}")
        if self.value_domain not in _VALUE_DOMAINS:
            raise ValueError(f"unknown value domain {self.value_domain!r}")
        if self.stack_depth < 1 or self.data.shape[1] % self.stack_depth != 0:
            raise ShapeError(
                f"channel count {self.data.shape[1]} not divisible by "
                f"stack depth {self.stack_depth}"
            )
        if self.value_domain == UINT8:
            if self.data.dtype != np.uint8:
                raise ValueError(f"uint8 domain requires uint8 data, got {self.data.dtype}")
        else:
            if not np.issubdtype(self.data.dtype, np.floating):
                raise ValueError(f"unit-float domain requires float data, got {self.data.dtype}")
            if self.data.size and (self.data.min() < 0.0 or self.data.max() > 1.0):
                raise ValueError("unit-float data outside [0, 1]")
        object.__setattr__(self, "data", _freeze(self.data))

    @property
    def batch_size(self) -> int:
        return self.data.shape[0]

    @property
    def base_channels(self) -> int:
        return self.data.shape[1] // self.stack_depth

    @property
    def frame_hw(self) -> tuple[int, int]:
        return self.data.shape[2], self.data.shape[3]

    def frames(self) -> np.ndarray:
        """View as individual frames [N * T, base_channels, H, W]."""
        n, c, h, w = self.data.shape
        return self.data.reshape(n * self.stack_depth, c // self.stack_depth, h, w)

    def with_data(self, data: np.ndarray) -> "ObservationBatch":
        return ObservationBatch(data, self.value_domain, self.stack_depth)


@dataclass(frozen=True)
class EpisodeRecord:
    """One demonstration episode: per-step frames, actions, rewards, outcome."""

    observations: np.ndarray  # [L, C, H, W] uint8 single frames
    actions: np.ndarray  # [L, A] float32
    rewards: np.ndarray  # [L] float32
    success: bool

    def __post_init__(self):
        if self.observations.ndim != 4:
            raise ShapeError(f"observations must be [L, C, H, W], got {self.observations.shape}")
        if self.actions.ndim != 2:
            raise ShapeError(f"actions must be [L, A], got {self.actions.shape}")
        length = self.observations.shape[0]
        if length == 0:
            raise ShapeError("empty episode")
        if self.actions.shape[0] != length or self.rewards.shape != (length,):
            raise ShapeError(
                f"misaligned episode: {length} observations, "
                f"{self.actions.shape[0]} actions, {self.rewards.shape[0]} rewards"
            )
        object.__setattr__(self, "observations", _freeze(self.observations))
        object.__setattr__(self, "actions", _freeze(self.actions.astype(np.float32, copy=False)))
        object.__setattr__(self, "rewards", _freeze(self.rewards.astype(np.float32, copy=False)))

    @property
    def length(self) -> int:
        return self.observations.shape[0]

    @property
    def action_dim(self) -> int:
        return self.actions.shape[1]

    @property
    def episode_return(self) -> float:
        return float(self.rewards.sum())


@dataclass(frozen=True)
class DemoDataset:
    """A collection of demonstration episodes for one task."""

    episodes: tuple[EpisodeRecord, ...]
    task_id: str

    def __post_init__(self):
        object.__setattr__(self, "episodes", tuple(self.episodes))
        if not self.episodes:
            raise ShapeError("dataset must contain at least one episode")
        shape = self.frame_shape
        dim = self.action_dim
        for i, ep in enumerate(self.episodes):
            if ep.observations.shape[1:] != shape:
                raise ShapeError(f"episode {i} frame shape {ep.observations.shape[1:]} != {shape}")
            if ep.action_dim != dim:
                raise ShapeError(f"episode {i} action dim {ep.action_dim} != {dim}")

    @property
    def frame_shape(self) -> tuple[int, int, int]:
        return self.episodes[0].observations.shape[1:]

    @property
    def action_dim(self) -> int:
        return self.episodes[0].action_dim

    @property
    def num_episodes(self) -> int:
        return len(self.episodes)

    @property
    def num_steps(self) -> int:
        return sum(ep.length for ep in self.episodes)


@dataclass(frozen=True)
class MetricSeries:
    """Ordered (step, score) checkpoint series of one metric kind."""

    steps: tuple[int, ...]
    scores: tuple[float, ...]
    metric_kind: str = SUCCESS_RATE

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(int(s) for s in self.steps))
        object.__setattr__(self, "scores", tuple(float(s) for s in self.scores))
        if len(self.steps) != len(self.scores):
            raise ShapeError("steps and scores must align")
        if self.metric_kind not in _METRIC_KINDS:
            raise ValueError(f"unknown metric kind {self.metric_kind!r}")
        if self.metric_kind in (SUCCESS_RATE, NORMALIZED_RETURN):
            for s in self.scores:
                if not 0.0 <= s <= 1.0:
                    raise ValueError(f"{self.metric_kind} score {s} outside [0, 1]")

    def __len__(self) -> int:
        return len(self.scores)

    def to_dict(self) -> dict:
        return {
            "steps": list(self.steps),
            "scores": list(self.scores),
            "metric_kind": self.metric_kind,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MetricSeries":
        return cls(tuple(d["steps"]), tuple(d["scores"]), d["metric_kind"])
