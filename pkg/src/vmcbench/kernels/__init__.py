"""Hot numeric kernels: numba-jitted fast path plus a pure-numpy fallback.

The backend is selected once at import time from the ``VMC_KERNEL_BACKEND``
environment variable ("numba", "numpy", or "auto"), and can be switched at
runtime with :func:`set_backend` (used by tests and the kernel benchmark).

Kernels are pure data movement or elementwise arithmetic; within a backend
every kernel is bitwise deterministic. The shift kernel is bitwise identical
across backends; floating-point kernels (im2col/col2im gradients, jitter)
agree across backends to well below 1e-6.
"""

from __future__ import annotations

import os

from . import _numpy as _np_impl

try:
    from . import _numba as _nb_impl

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _nb_impl = None
    HAS_NUMBA = False

_KERNEL_NAMES = ("im2col", "col2im", "shift_gather", "jitter_apply")

_backend_name = "numpy"
im2col = _np_impl.im2col
col2im = _np_impl.col2im
shift_gather = _np_impl.shift_gather
jitter_apply = _np_impl.jitter_apply


def set_backend(name: str) -> None:
    """Select the kernel backend: "numba", "numpy", or "auto"."""
    global _backend_name, im2col, col2im, shift_gather, jitter_apply
    if name == "auto":
        name = "numba" if HAS_NUMBA else "numpy"
    if name == "numba":
        if not HAS_NUMBA:
            raise RuntimeError("numba backend requested but numba is not importable")
        impl = _nb_impl
    elif name == "numpy":
        impl = _np_impl
    else:
        raise ValueError(f"unknown kernel backend {name!r} (expected numba/numpy/auto)")
    _backend_name = name
    im2col = impl.im2col
    col2im = impl.col2im
    shift_gather = impl.shift_gather
    jitter_apply = impl.jitter_apply


def get_backend() -> str:
    """Name of the active kernel backend."""
    return _backend_name


set_backend(os.environ.get("VMC_KERNEL_BACKEND", "auto"))
