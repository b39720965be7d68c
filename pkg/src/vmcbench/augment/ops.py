"""Augmentation operators.

Every operator draws its randomness from an RNGPolicy stream addressed by a
per-sample counter, so results depend only on (seed, stream, counter), never
on batch composition or call order. Draws are made once per stacked sample
and shared across the frames of that sample.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..core.rng import RNGPolicy
from ..core.types import UINT8, ObservationBatch
from ..errors import ConfigurationError, InvalidParameterError, ShapeError
from .specs import AugmentationSpec, DistractorSource, JitterParams


def _require_rng(rng: RNGPolicy | None, spec_rng: RNGPolicy | None) -> RNGPolicy:
    got = rng if rng is not None else spec_rng
    if got is None:
        raise ConfigurationError("augmentation draw requires an RNGPolicy")
    return got


def random_shift(
    batch: ObservationBatch,
    pad: int,
    rng: RNGPolicy | None = None,
    counter_base: int = 0,
    stream: str = "aug/shift",
    offsets: np.ndarray | None = None,
) -> ObservationBatch:
    """Randomly translate each sample by up to ``pad`` pixels per axis.

    The image is edge-padded by ``pad`` on all sides and a window of the
    original size is cropped at an integer offset drawn uniformly from
    [0, 2*pad]^2. One offset pair is drawn per sample and shared by every
    channel and stacked frame. ``offsets`` forces signed per-sample
    (dx, dy) in [-pad, pad] instead of drawing.
    """
    n, _, h, w = batch.data.shape
    if pad == 0:
        return batch
    if pad >= min(h, w) / 2:
        raise InvalidParameterError(
            f"shift pad {pad} too large for {h}x{w} frames; requires pad < min(H, W) / 2"
        )
    if offsets is not None:
        offsets = np.asarray(offsets, dtype=np.int64)
        if offsets.shape != (n, 2):
            raise ShapeError(f"forced offsets must be [{n}, 2], got {offsets.shape}")
        if np.any(np.abs(offsets) > pad):
            raise InvalidParameterError(f"forced offsets must lie in [-{pad}, {pad}]")
        dx = offsets[:, 0] + pad
        dy = offsets[:, 1] + pad
    else:
        policy = _require_rng(rng, None)
        counters = counter_base + np.arange(n, dtype=np.int64)
        dx = policy.integers(stream, counters, 0, 2 * pad + 1, draw=0)
        dy = policy.integers(stream, counters, 0, 2 * pad + 1, draw=1)
    out = kernels.shift_gather(batch.data, dx.astype(np.int64), dy.astype(np.int64), pad)
    return batch.with_data(out)


def _jitter_frames(frames_u01: np.ndarray, factors: np.ndarray) -> np.ndarray:
    """Apply per-image jitter factors [M, 4] to unit-domain frames [M, 3, H, W]."""
    bf = np.ascontiguousarray(factors[:, 0], dtype=np.float64)
    cf = np.ascontiguousarray(factors[:, 1], dtype=np.float64)
    sf = np.ascontiguousarray(factors[:, 2], dtype=np.float64)
    hf = np.ascontiguousarray(factors[:, 3], dtype=np.float64)
    return kernels.jitter_apply(np.ascontiguousarray(frames_u01, dtype=np.float64), bf, cf, sf, hf)


def draw_jitter_factors(
    params: JitterParams,
    rng: RNGPolicy,
    counters: np.ndarray,
    stream: str = "aug/jitter",
) -> np.ndarray:
    """Per-sample factor matrix [N, 4]: brightness, contrast, saturation, hue."""
    n = len(counters)
    out = np.empty((n, 4), dtype=np.float64)
    for j, mag in enumerate((params.brightness, params.contrast, params.saturation)):
        lo = max(0.0, 1.0 - mag)
        u = rng.uniform(stream, counters, draw=j)
        out[:, j] = lo + u * ((1.0 + mag) - lo)
    u = rng.uniform(stream, counters, draw=3)
    out[:, 3] = -params.hue + u * (2.0 * params.hue)
    return out


def color_jitter(
    batch: ObservationBatch,
    params: JitterParams,
    rng: RNGPolicy | None = None,
    counter_base: int = 0,
    stream: str = "aug/jitter",
    factors: np.ndarray | None = None,
) -> ObservationBatch:
    """Photometric jitter: brightness, contrast, saturation, then hue.

    Stages apply in that fixed order, each clamped back to [0, 1]. Factors
    are drawn once per stacked sample and shared across its frames.
    ``factors`` forces explicit per-sample values [N, 4].
    """
    if batch.base_channels != 3:
        raise ShapeError(
            f"color jitter requires RGB frames, got {batch.base_channels} base channels"
        )
    n = batch.batch_size
    if factors is None:
        if params.is_identity:
            return batch
        policy = _require_rng(rng, None)
        counters = counter_base + np.arange(n, dtype=np.int64)
        factors = draw_jitter_factors(params, policy, counters, stream=stream)
    else:
        factors = np.asarray(factors, dtype=np.float64)
        if factors.shape != (n, 4):
            raise ShapeError(f"forced jitter factors must be [{n}, 4], got {factors.shape}")
    t = batch.stack_depth
    per_frame = np.repeat(factors, t, axis=0)
    frames = batch.frames()
    if batch.value_domain == UINT8:
        out = _jitter_frames(frames.astype(np.float64) / 255.0, per_frame)
        out_u8 = np.rint(out * 255.0).astype(np.uint8)
        return batch.with_data(out_u8.reshape(batch.data.shape))
    out = _jitter_frames(frames, per_frame).astype(batch.data.dtype)
    return batch.with_data(out.reshape(batch.data.shape))


def random_overlay(
    batch: ObservationBatch,
    source: DistractorSource,
    alpha: float = 0.5,
    rng: RNGPolicy | None = None,
    counter_base: int = 0,
    stream: str = "aug/overlay",
    indices: np.ndarray | None = None,
) -> ObservationBatch:
    """Blend each sample with a distractor image: (1 - alpha) * obs + alpha * d.

    One distractor is drawn per sample and blended into every frame of the
    stack. alpha = 0 returns the batch unchanged; alpha = 1 yields the
    distractor exactly.
    """
    if not 0.0 <= alpha <= 1.0:
        raise InvalidParameterError(f"overlay alpha must lie in [0, 1], got {alpha}")
    if batch.base_channels != 3:
        raise ShapeError(
            f"overlay requires RGB frames, got {batch.base_channels} base channels"
        )
    if source.frame_hw != batch.frame_hw:
        raise ShapeError(
            f"distractor resolution {source.frame_hw} does not match frames {batch.frame_hw}"
        )
    if alpha == 0.0:
        return batch
    n = batch.batch_size
    if indices is None:
        policy = _require_rng(rng, None)
        counters = counter_base + np.arange(n, dtype=np.int64)
        indices = source.sample_indices(policy, stream, counters)
    else:
        indices = np.asarray(indices, dtype=np.int64)
        if indices.shape != (n,):
            raise ShapeError(f"forced indices must be [{n}], got {indices.shape}")
        if np.any((indices < 0) | (indices >= len(source))):
            raise InvalidParameterError("forced distractor index out of range")
    overlay = source.images[indices]
    t = batch.stack_depth
    frames = batch.frames().astype(np.float64)
    dist = np.repeat(overlay, t, axis=0).astype(np.float64)
    if batch.value_domain == UINT8:
        mixed = (1.0 - alpha) * frames + alpha * dist
        out = np.rint(mixed).astype(np.uint8)
    else:
        mixed = (1.0 - alpha) * frames + alpha * (dist / 255.0)
        out = mixed.astype(batch.data.dtype)
    return batch.with_data(out.reshape(batch.data.shape))


def apply_stack_consistent(
    spec: AugmentationSpec,
    batch: ObservationBatch,
    rng: RNGPolicy | None = None,
    counter_base: int = 0,
) -> ObservationBatch:
    """Apply ``spec`` to ``batch`` with frame-stack-consistent draws.

    Composite children run left to right, each under its own stream suffix
    so repeated kinds stay independently randomized. kind none is an exact
    identity.
    """
    return _apply(spec, batch, rng, counter_base, spec.stream)


def _apply(
    spec: AugmentationSpec,
    batch: ObservationBatch,
    rng: RNGPolicy | None,
    counter_base: int,
    stream: str,
) -> ObservationBatch:
    if spec.kind == "none":
        return batch
    policy = _require_rng(rng, spec.rng)
    if spec.kind == "shift":
        return random_shift(batch, spec.pad, policy, counter_base, stream=f"{stream}/shift")
    if spec.kind == "jitter":
        return color_jitter(batch, spec.jitter, policy, counter_base, stream=f"{stream}/jitter")
    if spec.kind == "overlay":
        if spec.distractors is None:
            raise ConfigurationError("overlay augmentation requires a distractor source")
        return random_overlay(
            batch, spec.distractors, spec.alpha, policy, counter_base, stream=f"{stream}/overlay"
        )
    if spec.kind == "composite":
        out = batch
        for i, child in enumerate(spec.children):
            out = _apply(child, out, policy, counter_base, f"{stream}/{i}")
        return out
    raise ConfigurationError(f"unknown augmentation kind {spec.kind!r}")
