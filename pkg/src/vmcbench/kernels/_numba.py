"""Numba-jitted implementations of the hot kernels.

Each function mirrors the arithmetic of the numpy fallback; the shift kernel
is pure data movement and matches it bitwise.
"""

from __future__ import annotations

import numpy as np
from numba import njit

_GRAY_R, _GRAY_G, _GRAY_B = 0.299, 0.587, 0.114


@njit(cache=True)
def im2col(x, kh, kw, stride, pad):
    n, c, h, w = x.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((n * oh * ow, c * kh * kw), dtype=x.dtype)
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (i * oh + oy) * ow + ox
                for ci in range(c):
                    base = ci * kh * kw
                    for ky in range(kh):
                        yy = oy * stride - pad + ky
                        if yy < 0 or yy >= h:
                            continue
                        for kx in range(kw):
                            xx = ox * stride - pad + kx
                            if 0 <= xx < w:
                                out[row, base + ky * kw + kx] = x[i, ci, yy, xx]
    return out


@njit(cache=True)
def col2im(cols, n, c, h, w, kh, kw, stride, pad):
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    dx = np.zeros((n, c, h, w), dtype=cols.dtype)
    for i in range(n):
        for oy in range(oh):
            for ox in range(ow):
                row = (i * oh + oy) * ow + ox
                for ci in range(c):
                    base = ci * kh * kw
                    for ky in range(kh):
                        yy = oy * stride - pad + ky
                        if yy < 0 or yy >= h:
                            continue
                        for kx in range(kw):
                            xx = ox * stride - pad + kx
                            if 0 <= xx < w:
                                dx[i, ci, yy, xx] += cols[row, base + ky * kw + kx]
    return dx


@njit(cache=True)
def shift_gather(x, dx, dy, pad):
    n, c, h, w = x.shape
    out = np.empty_like(x)
    for i in range(n):
        for ci in range(c):
            for yy in range(h):
                sy = yy + dy[i] - pad
                if sy < 0:
                    sy = 0
                elif sy > h - 1:
                    sy = h - 1
                for xx in range(w):
                    sx = xx + dx[i] - pad
                    if sx < 0:
                        sx = 0
                    elif sx > w - 1:
                        sx = w - 1
                    out[i, ci, yy, xx] = x[i, ci, sy, sx]
    return out


@njit(cache=True, inline="always")
def _clamp01(v):
    if v < 0.0:
        return 0.0
    if v > 1.0:
        return 1.0
    return v


@njit(cache=True)
def jitter_apply(img, bf, cf, sf, hf):
    m_imgs, _, h, w = img.shape
    out = np.empty_like(img)
    for i in range(m_imgs):
        # brightness, then per-image gray mean for contrast
        acc = 0.0
        for y in range(h):
            for x in range(w):
                r = _clamp01(img[i, 0, y, x] * bf[i])
                g = _clamp01(img[i, 1, y, x] * bf[i])
                b = _clamp01(img[i, 2, y, x] * bf[i])
                out[i, 0, y, x] = r
                out[i, 1, y, x] = g
                out[i, 2, y, x] = b
                acc += _GRAY_R * r + _GRAY_G * g + _GRAY_B * b
        mean = acc / (h * w)
        for y in range(h):
            for x in range(w):
                r = _clamp01(mean + cf[i] * (out[i, 0, y, x] - mean))
                g = _clamp01(mean + cf[i] * (out[i, 1, y, x] - mean))
                b = _clamp01(mean + cf[i] * (out[i, 2, y, x] - mean))
                gray = _GRAY_R * r + _GRAY_G * g + _GRAY_B * b
                r = _clamp01(gray + sf[i] * (r - gray))
                g = _clamp01(gray + sf[i] * (g - gray))
                b = _clamp01(gray + sf[i] * (b - gray))
                # hue rotation via HSV round trip
                maxc = max(r, max(g, b))
                minc = min(r, min(g, b))
                v = maxc
                d = maxc - minc
                if maxc > 0.0:
                    s = d / maxc
                else:
                    s = 0.0
                if d > 0.0:
                    if maxc == r:
                        hh = ((g - b) / d) % 6.0
                    elif maxc == g:
                        hh = (b - r) / d + 2.0
                    else:
                        hh = (r - g) / d + 4.0
                    hh /= 6.0
                else:
                    hh = 0.0
                hh = (hh + hf[i]) % 1.0
                h6 = hh * 6.0
                ii = np.floor(h6)
                f = h6 - ii
                p = v * (1.0 - s)
                q = v * (1.0 - s * f)
                t = v * (1.0 - s * (1.0 - f))
                sel = int(ii) % 6
                if sel == 0:
                    r, g, b = v, t, p
                elif sel == 1:
                    r, g, b = q, v, p
                elif sel == 2:
                    r, g, b = p, v, t
                elif sel == 3:
                    r, g, b = p, q, v
                elif sel == 4:
                    r, g, b = t, p, v
                else:
                    r, g, b = v, p, q
                out[i, 0, y, x] = _clamp01(r)
                out[i, 1, y, x] = _clamp01(g)
                out[i, 2, y, x] = _clamp01(b)
    return out
