"""Pure-numpy reference implementations of the hot kernels."""

from __future__ import annotations

import numpy as np

_GRAY_R, _GRAY_G, _GRAY_B = 0.299, 0.587, 0.114


def im2col(x: np.ndarray, kh: int, kw: int, stride: int, pad: int) -> np.ndarray:
    """Unfold [N, C, H, W] into patch rows [N*OH*OW, C*kh*kw] (zero padding)."""
    n, c, h, w = x.shape
    if pad:
        xp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=x.dtype)
        xp[:, :, pad : pad + h, pad : pad + w] = x
    else:
        xp = x
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    win = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, ::stride, ::stride]  # [n, c, oh, ow, kh, kw]
    cols = win.transpose(0, 2, 3, 1, 4, 5).reshape(n * oh * ow, c * kh * kw)
    return np.ascontiguousarray(cols)


def col2im(
    cols: np.ndarray, n: int, c: int, h: int, w: int, kh: int, kw: int, stride: int, pad: int
) -> np.ndarray:
    """Scatter-add patch rows back to [N, C, H, W]; adjoint of im2col."""
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    colsr = cols.reshape(n, oh, ow, c, kh, kw)
    dxp = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=cols.dtype)
    for ky in range(kh):
        for kx in range(kw):
            dxp[:, :, ky : ky + oh * stride : stride, kx : kx + ow * stride : stride] += (
                colsr[:, :, :, :, ky, kx].transpose(0, 3, 1, 2)
            )
    if pad:
        return np.ascontiguousarray(dxp[:, :, pad : pad + h, pad : pad + w])
    return dxp


def shift_gather(x: np.ndarray, dx: np.ndarray, dy: np.ndarray, pad: int) -> np.ndarray:
    """Replicate-pad by `pad` and crop at per-sample integer offset (dy, dx).

    Equivalent gather: out[n, c, i, j] = x[n, c, clip(i+dy[n]-pad), clip(j+dx[n]-pad)].
    """
    n, c, h, w = x.shape
    iy = np.clip(np.arange(h)[None, :] + dy[:, None] - pad, 0, h - 1)
    ix = np.clip(np.arange(w)[None, :] + dx[:, None] - pad, 0, w - 1)
    out = x[
        np.arange(n)[:, None, None, None],
        np.arange(c)[None, :, None, None],
        iy[:, None, :, None],
        ix[:, None, None, :],
    ]
    return np.ascontiguousarray(out)


def _rgb_to_hsv(r, g, b):
    maxc = np.maximum(np.maximum(r, g), b)
    minc = np.minimum(np.minimum(r, g), b)
    v = maxc
    d = maxc - minc
    s = np.where(maxc > 0, d / np.where(maxc > 0, maxc, 1.0), 0.0)
    safe_d = np.where(d > 0, d, 1.0)
    hr = np.mod((g - b) / safe_d, 6.0)
    hg = (b - r) / safe_d + 2.0
    hb = (r - g) / safe_d + 4.0
    hsel = np.where(maxc == r, hr, np.where(maxc == g, hg, hb))
    h = np.where(d > 0, hsel, 0.0) / 6.0
    return h, s, v


def _hsv_to_rgb(h, s, v):
    h6 = h * 6.0
    i = np.floor(h6)
    f = h6 - i
    p = v * (1.0 - s)
    q = v * (1.0 - s * f)
    t = v * (1.0 - s * (1.0 - f))
    imod = i.astype(np.int64) % 6
    r = np.choose(imod, [v, q, p, p, t, v])
    g = np.choose(imod, [t, v, v, q, p, p])
    b = np.choose(imod, [p, p, t, v, v, q])
    return r, g, b


def jitter_apply(
    img: np.ndarray, bf: np.ndarray, cf: np.ndarray, sf: np.ndarray, hf: np.ndarray
) -> np.ndarray:
    """Brightness/contrast/saturation scaling plus hue rotation, per image.

    img: [M, 3, H, W] float64 in [0, 1]; factors are per-image scalars.
    Stages apply in order b, c, s, h, each clamped to [0, 1].
    """
    x = img * bf[:, None, None, None]
    np.clip(x, 0.0, 1.0, out=x)

    gray = _GRAY_R * x[:, 0] + _GRAY_G * x[:, 1] + _GRAY_B * x[:, 2]
    mean = gray.reshape(gray.shape[0], -1).mean(axis=1)
    m = mean[:, None, None, None]
    x = m + cf[:, None, None, None] * (x - m)
    np.clip(x, 0.0, 1.0, out=x)

    gray = (_GRAY_R * x[:, 0] + _GRAY_G * x[:, 1] + _GRAY_B * x[:, 2])[:, None]
    x = gray + sf[:, None, None, None] * (x - gray)
    np.clip(x, 0.0, 1.0, out=x)

    h, s, v = _rgb_to_hsv(x[:, 0], x[:, 1], x[:, 2])
    h = np.mod(h + hf[:, None, None], 1.0)
    r, g, b = _hsv_to_rgb(h, s, v)
    out = np.stack([r, g, b], axis=1)
    np.clip(out, 0.0, 1.0, out=out)
    return out
