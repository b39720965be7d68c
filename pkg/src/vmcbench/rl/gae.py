"""Advantage and return estimation."""

from __future__ import annotations

import numpy as np

from ..errors import NumericalError, ShapeError


def compute_gae(rewards: np.ndarray, values: np.ndarray, gamma: float,
                lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one trajectory segment.

    ``values`` holds T+1 entries including the bootstrap value of the state
    after the last transition (zero for terminal states). Returns
    (advantages, returns) with returns = advantages + values[:-1].
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    t = rewards.shape[0]
    if values.shape[0] != t + 1:
        raise ShapeError(
            f"values must hold T+1 = {t + 1} entries, got {values.shape[0]}"
        )
    if not (np.all(np.isfinite(rewards)) and np.all(np.isfinite(values))):
        raise NumericalError("non-finite rewards or values in advantage estimation")
    adv = np.zeros(t, dtype=np.float64)
    acc = 0.0
    for i in range(t - 1, -1, -1):
        delta = rewards[i] + gamma * values[i + 1] - values[i]
        acc = delta + gamma * lam * acc
        adv[i] = acc
    return adv, adv + values[:-1]


def n_step_return(rewards: np.ndarray, gamma: float, n: int) -> tuple[float, float]:
    """Discounted sum of up to ``n`` rewards and the remaining discount.

    Returns (sum_{k<m} gamma^k r_k, gamma^m) with m = min(n, len(rewards)).
    The caller zeroes the discount when the window hits a terminal state.
    """
    m = min(n, len(rewards))
    total = 0.0
    g = 1.0
    for k in range(m):
        total += g * float(rewards[k])
        g *= gamma
    return total, g
