"""Greedy-policy evaluation on fixed derived episode seeds.

The same seed set anchors the scripted-expert and random-policy reference
returns, so a normalized score compares like with like: 0 tracks the
random policy, 1 the expert, both measured on the episodes the policy is
evaluated on.
"""

from __future__ import annotations

import numpy as np

from ..core.rng import RNGPolicy
from ..envdata.env import Environment
from ..envdata.expert import scripted_expert
from ..errors import NumericalError


def run_stacked_episode(env: Environment, seed: int, stack_depth: int,
                        action_fn) -> tuple[float, bool]:
    """One episode under ``action_fn(stacked_obs, t) -> action``."""
    obs = env.reset(seed)
    stack = [obs] * stack_depth
    total = 0.0
    success = False
    done = False
    t = 0
    while not done:
        a = action_fn(np.concatenate(stack, axis=0), t)
        obs, r, done, info = env.step(a)
        stack = stack[1:] + [obs]
        total += r
        success = bool(info["success"])
        t += 1
    return float(total), success


def evaluate_policy(env: Environment, rng: RNGPolicy, episodes: int,
                    stack_depth: int, action_fn,
                    stream: str = "eval/episode") -> tuple[float, float]:
    """(mean return, success rate) over the derived seed set."""
    returns, successes = [], []
    for i in range(episodes):
        ret, ok = run_stacked_episode(env, rng.child_seed(stream, i),
                                      stack_depth, action_fn)
        returns.append(ret)
        successes.append(ok)
    return float(np.mean(returns)), float(np.mean(successes))


def reference_returns(env: Environment, rng: RNGPolicy, episodes: int,
                      stream: str = "eval/episode") -> tuple[float, float]:
    """(random, expert) mean returns on the evaluation seeds."""
    a_dim = env.action_dim

    def random_fn(i):
        def fn(stacked, t):
            counters = (i * 100_000 + t) * a_dim + np.arange(a_dim)
            u = rng.uniform("eval/random", counters)
            return (2.0 * u - 1.0).astype(np.float32)
        return fn

    rand_rets, exp_rets = [], []
    for i in range(episodes):
        seed = rng.child_seed(stream, i)
        ret, _ = run_stacked_episode(env, seed, 1, random_fn(i))
        rand_rets.append(ret)
        ret, _ = run_stacked_episode(env, seed, 1,
                                     lambda stacked, t: scripted_expert(env))
        exp_rets.append(ret)
    lo, hi = float(np.mean(rand_rets)), float(np.mean(exp_rets))
    if hi - lo <= 1e-9:
        raise NumericalError(
            f"reference returns give no scale: expert {hi:.4f}, random {lo:.4f}"
        )
    return lo, hi
