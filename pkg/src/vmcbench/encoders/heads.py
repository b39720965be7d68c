"""Policy heads mapping representation features to actions."""

from __future__ import annotations

import numpy as np

from ..errors import ConfigurationError
from ..nn import BatchNorm1d, LayerNorm, Linear, ReLU, Sequential, Tanh


class PolicyHead:
    """MLP action head, optionally with a bounded trunk in front.

    Layout: [BatchNorm1d] -> [Linear -> LayerNorm -> Tanh trunk] ->
    hidden Linear+ReLU blocks -> Linear to action_dim. The leading
    batch norm is used when features come from an external pre-trained
    representation; the trunk keeps its output in (-1, 1).
    """

    def __init__(self, net: Sequential, in_dim: int, action_dim: int):
        self.net = net
        self.in_dim = in_dim
        self.action_dim = action_dim

    def params(self):
        return self.net.params()

    def forward(self, feats: np.ndarray, train: bool = False) -> np.ndarray:
        return self.net.forward(feats, train=train)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return self.net.backward(dy)

    def state_dict(self):
        return self.net.state_dict()

    def load_state_dict(self, arrays):
        self.net.load_state_dict(arrays)


def build_policy_head(
    in_dim: int,
    action_dim: int,
    rng: np.random.Generator,
    hidden: tuple[int, ...] = (256, 256, 256),
    leading_batchnorm: bool = False,
    trunk_dim: int | None = None,
    dtype=np.float32,
) -> PolicyHead:
    if in_dim < 1 or action_dim < 1:
        raise ConfigurationError(
            f"policy head needs positive dims, got in={in_dim} action={action_dim}"
        )
    layers = []
    if leading_batchnorm:
        layers.append(BatchNorm1d(in_dim, dtype=dtype))
    width = in_dim
    if trunk_dim is not None:
        layers.extend([
            Linear(width, trunk_dim, rng, dtype=dtype),
            LayerNorm(trunk_dim, dtype=dtype),
            Tanh(),
        ])
        width = trunk_dim
    for h in hidden:
        layers.extend([Linear(width, h, rng, dtype=dtype), ReLU()])
        width = h
    layers.append(Linear(width, action_dim, rng, dtype=dtype))
    return PolicyHead(Sequential(layers), in_dim, action_dim)
