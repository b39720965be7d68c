"""Metric arithmetic: return normalization, top-k scoring, bootstrap CIs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from ..errors import InsufficientDataError, InvalidRangeError
from .rng import RNGPolicy

BOOTSTRAP_RESAMPLES = 10_000
BOOTSTRAP_STREAM = "metrics/bootstrap"


def normalize_return(raw: float, lo: float, hi: float) -> float:
    """Affinely map a raw return onto [0, 1] against reference bounds.

    Values outside [lo, hi] clamp to the interval endpoints.
    """
    if hi <= lo:
        raise InvalidRangeError(f"reference bounds require hi > lo, got [{lo}, {hi}]")
    return float(np.clip((raw - lo) / (hi - lo), 0.0, 1.0))


def top_k_mean(scores: Sequence[float], k: int) -> float:
    """Mean of the k largest scores."""
    if k < 1:
        raise InsufficientDataError(f"k must be >= 1, got {k}")
    if len(scores) < k:
        raise InsufficientDataError(f"need at least {k} scores, got {len(scores)}")
    arr = np.sort(np.asarray(scores, dtype=np.float64))
    return float(arr[-k:].mean())


def aggregate_ci(
    values: Sequence[float],
    level: float = 0.95,
    rng: RNGPolicy | None = None,
    resamples: int = BOOTSTRAP_RESAMPLES,
) -> tuple[float, float, float]:
    """Mean plus a percentile-bootstrap confidence interval.

    Resample indices come from the counter-based RNG, so the interval is
    deterministic for a given RNGPolicy. The returned interval is widened, if
    necessary, to contain the sample mean.
    """
    n = len(values)
    if n < 2:
        raise InsufficientDataError(f"confidence interval needs >= 2 values, got {n}")
    if not 0.0 < level < 1.0:
        raise InvalidRangeError(f"level must be in (0, 1), got {level}")
    rng = rng if rng is not None else RNGPolicy(0)
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    idx = rng.integers(BOOTSTRAP_STREAM, np.arange(resamples * n), lo=0, hi=n).reshape(
        resamples, n
    )
    means = arr[idx].mean(axis=1)
    alpha = (1.0 - level) / 2.0
    lo = float(np.quantile(means, alpha))
    hi = float(np.quantile(means, 1.0 - alpha))
    return mean, min(lo, mean), max(hi, mean)
