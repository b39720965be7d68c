"""Small image helpers shared across modules: resizing and domain conversion."""

from __future__ import annotations

import numpy as np

from .errors import ShapeError


def to_unit_float(frames: np.ndarray) -> np.ndarray:
    """uint8 [..., H, W] -> float32 in [0, 1]. Float input is passed through as float32."""
    if frames.dtype == np.uint8:
        return frames.astype(np.float32) / 255.0
    return np.ascontiguousarray(frames, dtype=np.float32)


def to_uint8(frames: np.ndarray) -> np.ndarray:
    """Unit-domain float -> uint8 with round-half-even, clamped."""
    return np.rint(np.clip(frames, 0.0, 1.0) * 255.0).astype(np.uint8)


def bilinear_resize(frames: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Resize [..., H, W] float array to [..., h, w] with align-corners bilinear.

    Not a hot path; used when an external representation expects a fixed
    native resolution and when loading distractor images from disk.
    """
    h_out, w_out = out_hw
    if h_out < 1 or w_out < 1:
        raise ShapeError(f"resize target must be positive, got {out_hw}")
    *lead, h, w = frames.shape
    if h == h_out and w == w_out:
        return frames
    flat = frames.reshape(-1, h, w)
    y = np.linspace(0.0, h - 1.0, h_out) if h_out > 1 else np.zeros(1)
    x = np.linspace(0.0, w - 1.0, w_out) if w_out > 1 else np.zeros(1)
    y0 = np.minimum(y.astype(np.int64), max(h - 2, 0))
    x0 = np.minimum(x.astype(np.int64), max(w - 2, 0))
    y1 = np.minimum(y0 + 1, h - 1)
    x1 = np.minimum(x0 + 1, w - 1)
    fy = (y - y0)[None, :, None]
    fx = (x - x0)[None, None, :]
    top = flat[:, y0][:, :, x0] * (1.0 - fx) + flat[:, y0][:, :, x1] * fx
    bot = flat[:, y1][:, :, x0] * (1.0 - fx) + flat[:, y1][:, :, x1] * fx
    out = top * (1.0 - fy) + bot * fy
    return out.reshape(*lead, h_out, w_out).astype(frames.dtype, copy=False)
