"""Shared domain types, metric arithmetic, and deterministic RNG contracts."""

from .checkpoint import load_state, pack_state, save_state, unpack_state
from .metrics import aggregate_ci, normalize_return, top_k_mean
from .rng import RNGPolicy
from .types import (
    DemoDataset,
    EpisodeRecord,
    MetricSeries,
    ObservationBatch,
    UINT8,
    UNIT_FLOAT,
)

__all__ = [
    "RNGPolicy",
    "ObservationBatch",
    "EpisodeRecord",
    "DemoDataset",
    "MetricSeries",
    "UINT8",
    "UNIT_FLOAT",
    "normalize_return",
    "top_k_mean",
    "aggregate_ci",
    "pack_state",
    "unpack_state",
    "save_state",
    "load_state",
]
