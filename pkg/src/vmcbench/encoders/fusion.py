"""Temporal fusion of per-frame latents: frames plus successive differences.

For latents z_1..z_T of width d the fused vector is
concat(z_1, ..., z_T, z_2 - z_1, ..., z_T - z_{T-1}) with width (2T - 1) * d.
T = 1 is the identity.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeError


def fused_dim(stack_depth: int, latent_dim: int) -> int:
    return (2 * stack_depth - 1) * latent_dim


def flare_fuse(latents: np.ndarray) -> np.ndarray:
    """[N, T, d] per-frame latents -> [N, (2T-1)*d] fused features."""
    if latents.ndim != 3:
        raise ShapeError(f"flare_fuse expects [N, T, d], got {latents.shape}")
    n, t, d = latents.shape
    if t == 1:
        return latents.reshape(n, d)
    diffs = latents[:, 1:] - latents[:, :-1]
    return np.concatenate([latents.reshape(n, t * d), diffs.reshape(n, (t - 1) * d)], axis=1)


def flare_backward(dfused: np.ndarray, stack_depth: int, latent_dim: int) -> np.ndarray:
    """Gradient of flare_fuse: [N, (2T-1)*d] -> [N, T, d]."""
    n = dfused.shape[0]
    t, d = stack_depth, latent_dim
    if dfused.shape[1] != fused_dim(t, d):
        raise ShapeError(
            f"fused grad width {dfused.shape[1]} != (2*{t}-1)*{d}"
        )
    dz = dfused[:, : t * d].reshape(n, t, d).copy()
    if t > 1:
        ddiff = dfused[:, t * d :].reshape(n, t - 1, d)
        dz[:, 1:] += ddiff
        dz[:, :-1] -= ddiff
    return dz
