"""Learning-from-scratch ConvNet encoders.

Three fixed layer recipes, one per training regime. Each is defined relative
to a native input resolution but builds at any resolution the conv chain
survives; the flattened output dimension follows from the input shape.

* ``bc``: five [3x3 stride-2 conv, BatchNorm, ReLU] blocks, 32 channels,
  padding 1. 3x256x256 input flattens to 2048.
* ``onpolicy``: six stride-2 valid convs with kernels 7/5/3/3/3/3, 32
  channels, ReLU between. 3x224x224 input flattens to 128.
* ``offpolicy``: four 3x3 valid convs with strides 2/1/1/1, 32 channels,
  ReLU after each, consuming the whole frame stack jointly. 9x84x84 input
  flattens to 39200.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, ShapeError
from ..nn import BatchNorm2d, Conv2d, Flatten, ReLU, Sequential

ENCODER_VARIANTS = ("bc", "onpolicy", "offpolicy")

# (kernel, stride, pad, batchnorm) per conv block; channels fixed at 32
_PLANS = {
    "bc": tuple((3, 2, 1, True) for _ in range(5)),
    "onpolicy": ((7, 2, 0, False), (5, 2, 0, False)) + tuple((3, 2, 0, False) for _ in range(4)),
    "offpolicy": ((3, 2, 0, False),) + tuple((3, 1, 0, False) for _ in range(3)),
}
_CHANNELS = 32
NATIVE_RESOLUTION = {"bc": 256, "onpolicy": 224, "offpolicy": 84}


def conv_chain_hw(variant: str, h: int, w: int) -> tuple[int, int]:
    """Spatial size after the variant's conv chain; ShapeError if it collapses."""
    if variant not in _PLANS:
        raise ConfigurationError(f"unknown encoder variant {variant!r}")
    for k, s, p, _ in _PLANS[variant]:
        if h + 2 * p < k or w + 2 * p < k:
            raise ShapeError(
                f"{variant} encoder cannot consume {h}x{w} input; conv k={k} underruns"
            )
        h = (h + 2 * p - k) // s + 1
        w = (w + 2 * p - k) // s + 1
    return h, w


def encoder_output_dim(variant: str, input_shape: tuple[int, int, int]) -> int:
    _, h, w = input_shape
    oh, ow = conv_chain_hw(variant, h, w)
    return _CHANNELS * oh * ow


@dataclass(frozen=True)
class ScratchEncoderSpec:
    """Resolved encoder description: variant, input shape, derived output dim."""

    variant: str
    input_shape: tuple[int, int, int]
    output_dim: int

    def __post_init__(self) -> None:
        if self.variant not in ENCODER_VARIANTS:
            raise ConfigurationError(f"unknown encoder variant {self.variant!r}")
        if encoder_output_dim(self.variant, self.input_shape) != self.output_dim:
            raise ShapeError(
                f"output_dim {self.output_dim} inconsistent with {self.variant} "
                f"at input {self.input_shape}"
            )


def scratch_encoder_spec(variant: str, input_shape: tuple[int, int, int]) -> ScratchEncoderSpec:
    return ScratchEncoderSpec(variant, tuple(input_shape), encoder_output_dim(variant, input_shape))


def build_scratch_net(variant: str, input_shape: tuple[int, int, int],
                      rng: np.random.Generator, dtype=np.float32) -> Sequential:
    """Sequential conv stack ending in Flatten for the given variant."""
    c, h, w = input_shape
    conv_chain_hw(variant, h, w)  # validate before allocating
    layers = []
    in_ch = c
    for k, s, p, bn in _PLANS[variant]:
        layers.append(Conv2d(in_ch, _CHANNELS, k, s, p, rng, dtype=dtype, bias=not bn))
        if bn:
            layers.append(BatchNorm2d(_CHANNELS, dtype=dtype))
        layers.append(ReLU())
        in_ch = _CHANNELS
    layers.append(Flatten())
    return Sequential(layers)


def build_scratch_encoder(variant: str, input_shape: tuple[int, int, int],
                          rng: np.random.Generator, dtype=np.float32):
    """ScratchBackend wrapping the variant's conv net; always trainable."""
    from .backend import ScratchBackend

    spec = scratch_encoder_spec(variant, input_shape)
    net = build_scratch_net(variant, input_shape, rng, dtype=dtype)
    return ScratchBackend(spec, net)
