"""Layers with hand-written backward passes over numpy arrays.

Convolutions lower to im2col plus a BLAS matmul through the kernels module,
so they share the numba/numpy backend switch. Every layer caches what its
backward pass needs during forward; backward must follow the matching
forward. Gradients accumulate into ``Parameter.grad`` so several heads can
backpropagate into a shared trunk before one optimizer step.
"""

from __future__ import annotations

import numpy as np

from .. import kernels
from ..errors import ShapeError


class Parameter:
    """Trainable array with accumulated gradient and a freeze flag.

    Frozen parameters receive no gradient (their grad stays identically
    zero) and are skipped by optimizers.
    """

    __slots__ = ("name", "data", "grad", "frozen")

    def __init__(self, data: np.ndarray, name: str = "param", frozen: bool = False):
        self.name = name
        self.data = np.ascontiguousarray(data)
        self.grad = np.zeros_like(self.data)
        self.frozen = frozen

    def accumulate(self, g: np.ndarray) -> None:
        if not self.frozen:
            self.grad += g

    def __repr__(self) -> str:
        tag = ", frozen" if self.frozen else ""
        return f"Parameter({self.name}, shape={self.data.shape}{tag})"


def orthogonal_matrix(rows: int, cols: int, rng: np.random.Generator, gain: float = 1.0,
                      dtype=np.float32) -> np.ndarray:
    """Orthogonal [rows, cols] init (orthonormal rows or columns), sign-fixed."""
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return (gain * q[:rows, :cols]).astype(dtype)


class Layer:
    """Base layer: forward caches, backward consumes the cache."""

    def params(self) -> list[Parameter]:
        return []

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return []

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = [(p.name, p.data) for p in self.params()]
        out.extend(self.buffers())
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray], prefix: str = "") -> None:
        for name, dst in self.state_arrays():
            src = arrays[prefix + name]
            if src.shape != dst.shape:
                raise ShapeError(
                    f"state mismatch for {prefix + name}: {src.shape} vs {dst.shape}"
                )
            dst[...] = src.astype(dst.dtype, copy=False)

    def set_frozen(self, frozen: bool) -> None:
        for p in self.params():
            p.frozen = frozen
            if frozen:
                p.grad[...] = 0


class Linear(Layer):
    def __init__(self, in_dim: int, out_dim: int, rng: np.random.Generator,
                 gain: float = 1.0, dtype=np.float32, bias: bool = True):
        self.in_dim = in_dim
        self.out_dim = out_dim
        self.w = Parameter(orthogonal_matrix(out_dim, in_dim, rng, gain, dtype), "w")
        # layers feeding a BatchNorm drop the bias; BN's shift absorbs it
        self.b = Parameter(np.zeros(out_dim, dtype=dtype), "b") if bias else None
        self._x: np.ndarray | None = None

    def params(self) -> list[Parameter]:
        return [self.w] if self.b is None else [self.w, self.b]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._x = x
        y = x @ self.w.data.T
        if self.b is not None:
            y += self.b.data
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x = self._x
        self.w.accumulate(dy.T @ x)
        if self.b is not None:
            self.b.accumulate(dy.sum(axis=0))
        return dy @ self.w.data


class Conv2d(Layer):
    """2-D convolution via im2col and a single matmul per batch."""

    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int,
                 pad: int, rng: np.random.Generator, gain: float = 1.0,
                 dtype=np.float32, bias: bool = True):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kernel, self.stride, self.pad = kernel, stride, pad
        wm = orthogonal_matrix(out_ch, in_ch * kernel * kernel, rng, gain, dtype)
        self.w = Parameter(wm.reshape(out_ch, in_ch, kernel, kernel), "w")
        self.b = Parameter(np.zeros(out_ch, dtype=dtype), "b") if bias else None
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, int, int, int] | None = None

    def params(self) -> list[Parameter]:
        return [self.w] if self.b is None else [self.w, self.b]

    def out_hw(self, h: int, w: int) -> tuple[int, int]:
        k, s, p = self.kernel, self.stride, self.pad
        oh = (h + 2 * p - k) // s + 1
        ow = (w + 2 * p - k) // s + 1
        if oh < 1 or ow < 1 or (h + 2 * p) < k or (w + 2 * p) < k:
            raise ShapeError(
                f"conv k={k} s={s} p={p} collapses {h}x{w} input to {oh}x{ow}"
            )
        return oh, ow

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        n, c, h, w = x.shape
        if c != self.in_ch:
            raise ShapeError(f"conv expects {self.in_ch} input channels, got {c}")
        oh, ow = self.out_hw(h, w)
        cols = kernels.im2col(x, self.kernel, self.kernel, self.stride, self.pad)
        self._cols = cols
        self._in_shape = (n, c, h, w)
        wm = self.w.data.reshape(self.out_ch, -1)
        y = cols @ wm.T
        if self.b is not None:
            y += self.b.data
        return y.reshape(n, oh, ow, self.out_ch).transpose(0, 3, 1, 2)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self._in_shape
        dyr = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_ch)
        self.w.accumulate((dyr.T @ self._cols).reshape(self.w.data.shape))
        if self.b is not None:
            self.b.accumulate(dyr.sum(axis=0))
        wm = self.w.data.reshape(self.out_ch, -1)
        dcols = dyr @ wm
        return kernels.col2im(dcols, n, c, h, w, self.kernel, self.kernel,
                              self.stride, self.pad)


class _BatchNormBase(Layer):
    def __init__(self, num: int, eps: float = 1e-5, momentum: float = 0.1, dtype=np.float32):
        self.num = num
        self.eps = eps
        self.momentum = momentum
        self.gamma = Parameter(np.ones(num, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(num, dtype=dtype), "beta")
        self.running_mean = np.zeros(num, dtype=dtype)
        self.running_var = np.ones(num, dtype=dtype)
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def buffers(self) -> list[tuple[str, np.ndarray]]:
        return [("running_mean", self.running_mean), ("running_var", self.running_var)]

    def _normalize(self, x: np.ndarray, axes: tuple[int, ...], shape, train: bool) -> np.ndarray:
        if train:
            mean = x.mean(axis=axes)
            var = x.var(axis=axes)
            m = x.size // self.num
            unbiased = var * (m / max(m - 1, 1))
            mom = self.momentum
            self.running_mean[...] = (1 - mom) * self.running_mean + mom * mean
            self.running_var[...] = (1 - mom) * self.running_var + mom * unbiased
        else:
            mean = self.running_mean
            var = self.running_var
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean.reshape(shape)) * inv_std.reshape(shape)
        self._cache = (xhat, inv_std, axes, shape, train, x.size // self.num)
        return self.gamma.data.reshape(shape) * xhat + self.beta.data.reshape(shape)

    def _backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std, axes, shape, train, m = self._cache
        self.beta.accumulate(dy.sum(axis=axes))
        self.gamma.accumulate((dy * xhat).sum(axis=axes))
        dxhat = dy * self.gamma.data.reshape(shape)
        if not train:
            return dxhat * inv_std.reshape(shape)
        s1 = dxhat.sum(axis=axes).reshape(shape)
        s2 = (dxhat * xhat).sum(axis=axes).reshape(shape)
        return (inv_std.reshape(shape) / m) * (m * dxhat - s1 - xhat * s2)


class BatchNorm2d(_BatchNormBase):
    """Per-channel batch normalization over (N, H, W)."""

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 4 or x.shape[1] != self.num:
            raise ShapeError(f"BatchNorm2d({self.num}) got input {x.shape}")
        return self._normalize(x, (0, 2, 3), (1, self.num, 1, 1), train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self._backward(dy)


class BatchNorm1d(_BatchNormBase):
    """Per-feature batch normalization over the batch axis."""

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.ndim != 2 or x.shape[1] != self.num:
            raise ShapeError(f"BatchNorm1d({self.num}) got input {x.shape}")
        return self._normalize(x, (0,), (1, self.num), train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self._backward(dy)


class LayerNorm(Layer):
    """Normalization over the last axis with learned scale and shift."""

    def __init__(self, dim: int, eps: float = 1e-5, dtype=np.float32):
        self.dim = dim
        self.eps = eps
        self.gamma = Parameter(np.ones(dim, dtype=dtype), "gamma")
        self.beta = Parameter(np.zeros(dim, dtype=dtype), "beta")
        self._cache = None

    def params(self) -> list[Parameter]:
        return [self.gamma, self.beta]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[-1] != self.dim:
            raise ShapeError(f"LayerNorm({self.dim}) got input {x.shape}")
        mean = x.mean(axis=-1, keepdims=True)
        var = x.var(axis=-1, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + self.eps)
        xhat = (x - mean) * inv_std
        self._cache = (xhat, inv_std)
        return self.gamma.data * xhat + self.beta.data

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, inv_std = self._cache
        self.beta.accumulate(dy.sum(axis=tuple(range(dy.ndim - 1))))
        self.gamma.accumulate((dy * xhat).sum(axis=tuple(range(dy.ndim - 1))))
        dxhat = dy * self.gamma.data
        d = self.dim
        s1 = dxhat.sum(axis=-1, keepdims=True)
        s2 = (dxhat * xhat).sum(axis=-1, keepdims=True)
        return (inv_std / d) * (d * dxhat - s1 - xhat * s2)


class ReLU(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * self._mask


class Tanh(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy * (1.0 - self._y * self._y)


class Flatten(Layer):
    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return dy.reshape(self._shape)


class Sequential(Layer):
    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)

    def params(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params()]

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, train=train)
        return x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dy = layer.backward(dy)
        return dy

    def state_arrays(self) -> list[tuple[str, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            out.extend((f"{i}.{name}", arr) for name, arr in layer.state_arrays())
        return out

    def state_dict(self) -> dict[str, np.ndarray]:
        return {name: arr.copy() for name, arr in self.state_arrays()}

    def load_state_dict(self, arrays: dict[str, np.ndarray]) -> None:
        for name, dst in self.state_arrays():
            src = arrays[name]
            if src.shape != dst.shape:
                raise ShapeError(f"state mismatch for {name}: {src.shape} vs {dst.shape}")
            dst[...] = src.astype(dst.dtype, copy=False)
