"""Finite-difference gradient checking shared by the nn and acceptance tests.

The scalar loss is L = sum(net(x) * cotangent) for a fixed random
cotangent, so dL/dy is the cotangent itself and every parameter gradient
is reachable through one backward call.
"""

import numpy as np

from vmcbench.nn import Conv2d, BatchNorm2d, Flatten, ReLU, Sequential
from vmcbench.nn.optim import zero_grad

# longest prefix of each encoder recipe that survives an 8x8 input
MINIATURE_PLANS = {
    "bc": ((3, 2, 1, True),) * 5,
    "onpolicy": ((7, 2, 0, False),),
    "offpolicy": ((3, 2, 0, False), (3, 1, 0, False)),
}
MINIATURE_CHANNELS = 6


def build_miniature_encoder(variant: str, in_ch: int, rng: np.random.Generator,
                            dtype=np.float64) -> Sequential:
    layers = []
    c = in_ch
    for k, s, p, bn in MINIATURE_PLANS[variant]:
        layers.append(Conv2d(c, MINIATURE_CHANNELS, k, s, p, rng, dtype=dtype,
                             bias=not bn))
        if bn:
            layers.append(BatchNorm2d(MINIATURE_CHANNELS, dtype=dtype))
        layers.append(ReLU())
        c = MINIATURE_CHANNELS
    layers.append(Flatten())
    return Sequential(layers)


def analytic_param_grads(net, x, cotangent, train=True):
    zero_grad(net.params())
    net.forward(x, train=train)
    net.backward(cotangent)
    return [(p, p.grad.copy()) for p in net.params()]


def numeric_param_grad(net, x, cotangent, param, index, eps=1e-5, train=True):
    original = param.data[index]
    param.data[index] = original + eps
    lp = float(np.sum(net.forward(x, train=train) * cotangent))
    param.data[index] = original - eps
    lm = float(np.sum(net.forward(x, train=train) * cotangent))
    param.data[index] = original
    return (lp - lm) / (2.0 * eps)


def max_relative_grad_error(net, x, gen, entries_per_param=6, eps=1e-5,
                            train=True):
    """Largest relative FD mismatch over sampled parameter entries."""
    cotangent = gen.standard_normal(net.forward(x, train=train).shape)
    grads = analytic_param_grads(net, x, cotangent, train=train)
    worst = 0.0
    for param, grad in grads:
        flat = grad.reshape(-1)
        count = min(entries_per_param, flat.size)
        picks = gen.choice(flat.size, size=count, replace=False)
        for j in picks:
            index = np.unravel_index(j, grad.shape)
            numeric = numeric_param_grad(net, x, cotangent, param, index,
                                         eps=eps, train=train)
            scale = max(abs(numeric), abs(flat[j]), 1e-8)
            worst = max(worst, abs(numeric - flat[j]) / scale)
    return worst
