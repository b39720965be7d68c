"""Procedural value-noise textures.

Used for distractor image pools and time-varying synthetic video backgrounds,
removing any dependency on external image/video datasets. All randomness is
counter-based, so a texture at (stream, t) is reproducible in isolation.
"""

from __future__ import annotations

import numpy as np

from .core.rng import RNGPolicy


def _lattice(rng: RNGPolicy, stream: str, cells: int, channels: int, slot: int) -> np.ndarray:
    """Random value lattice [channels, cells+1, cells+1] for one time slot."""
    g = cells + 1
    vals = rng.uniform(stream, np.arange(channels * g * g), draw=slot)
    return vals.reshape(channels, g, g)


def _bilinear_upsample(grid: np.ndarray, h: int, w: int) -> np.ndarray:
    """Upsample [C, gh, gw] lattice to [C, h, w] with bilinear interpolation."""
    _, gh, gw = grid.shape
    y = np.linspace(0.0, gh - 1.0, h)
    x = np.linspace(0.0, gw - 1.0, w)
    y0 = np.minimum(y.astype(np.int64), gh - 2)
    x0 = np.minimum(x.astype(np.int64), gw - 2)
    fy = (y - y0)[None, :, None]
    fx = (x - x0)[None, None, :]
    g00 = grid[:, y0][:, :, x0]
    g01 = grid[:, y0][:, :, x0 + 1]
    g10 = grid[:, y0 + 1][:, :, x0]
    g11 = grid[:, y0 + 1][:, :, x0 + 1]
    top = g00 * (1.0 - fx) + g01 * fx
    bot = g10 * (1.0 - fx) + g11 * fx
    return top * (1.0 - fy) + bot * fy


def value_noise(
    rng: RNGPolicy,
    stream: str,
    h: int,
    w: int,
    t: float = 0.0,
    channels: int = 3,
    octaves: int = 3,
    base_cells: int = 4,
) -> np.ndarray:
    """Multi-octave value noise [channels, h, w] in [0, 1].

    ``t`` moves the texture smoothly through time: each octave interpolates
    between the lattices of adjacent integer time slots.
    """
    t0 = int(np.floor(t))
    tf = float(t - t0)
    out = np.zeros((channels, h, w), dtype=np.float64)
    amp, total = 1.0, 0.0
    for o in range(octaves):
        cells = base_cells * (1 << o)
        name = f"{stream}/o{o}"
        g0 = _lattice(rng, name, cells, channels, slot=2 * t0)
        if tf > 0.0:
            g1 = _lattice(rng, name, cells, channels, slot=2 * (t0 + 1))
            g = g0 * (1.0 - tf) + g1 * tf
        else:
            g = g0
        out += amp * _bilinear_upsample(g, h, w)
        total += amp
        amp *= 0.5
    return out / total


def noise_frame_u8(
    rng: RNGPolicy,
    stream: str,
    h: int,
    w: int,
    t: float = 0.0,
    octaves: int = 3,
    base_cells: int = 4,
) -> np.ndarray:
    """RGB uint8 noise frame [3, h, w]."""
    tex = value_noise(rng, stream, h, w, t=t, channels=3, octaves=octaves, base_cells=base_cells)
    return np.rint(tex * 255.0).astype(np.uint8)
