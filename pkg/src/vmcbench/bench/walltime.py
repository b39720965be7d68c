"""Wall-time profiling: training s/iteration, inference s/episode,
environment s/1k frames.

All figures are medians of post-warm-up samples. When an interval is too
close to the timer's tick size to trust, a warning is logged and the
measurement falls back to amortized timing over the whole loop.
"""

from __future__ import annotations

import logging
import math
import time

import numpy as np

from ..core.rng import RNGPolicy
from ..errors import InvalidParameterError
from .config import ExperimentConfig
from .run import build_bc_config, load_or_generate_demos, _env_factory

log = logging.getLogger(__name__)

MIN_ITERATIONS = 10
MIN_WARMUP = 3
# intervals under this many timer ticks are considered unresolvable
RESOLUTION_MARGIN = 100


def timer_resolution() -> float:
    info = time.get_clock_info("perf_counter")
    return max(float(info.resolution), 1e-9)


def time_callable(fn, iterations: int, warmup: int = MIN_WARMUP,
                  units_per_call: float = 1.0) -> dict:
    """Median seconds per unit of work across timed calls.

    ``units_per_call`` divides each sample, e.g. batches per epoch when
    one call runs a whole epoch.
    """
    if iterations < MIN_ITERATIONS:
        raise InvalidParameterError(
            f"wall-time measurement needs >= {MIN_ITERATIONS} iterations, got {iterations}"
        )
    if warmup < MIN_WARMUP:
        raise InvalidParameterError(
            f"wall-time measurement needs >= {MIN_WARMUP} warm-up calls, got {warmup}"
        )
    if units_per_call <= 0:
        raise InvalidParameterError("units_per_call must be positive")
    for _ in range(warmup):
        fn()
    samples = []
    for _ in range(iterations):
        t0 = time.perf_counter()
        fn()
        samples.append((time.perf_counter() - t0) / units_per_call)
    median = float(np.median(samples))
    amortized = False
    if median * units_per_call < RESOLUTION_MARGIN * timer_resolution():
        log.warning(
            "interval %.3e s is within %dx of timer resolution %.3e s; "
            "switching to amortized timing", median * units_per_call,
            RESOLUTION_MARGIN, timer_resolution(),
        )
        t0 = time.perf_counter()
        for _ in range(iterations):
            fn()
        median = (time.perf_counter() - t0) / (iterations * units_per_call)
        amortized = True
    if not (math.isfinite(median) and median > 0):
        raise InvalidParameterError(f"degenerate timing measurement: {median}")
    return {"median_s": median, "samples": samples, "amortized": amortized}


def _bc_iteration_timer(config: ExperimentConfig, dataset, iterations: int,
                        warmup: int) -> dict:
    from ..imitation.bc import BCTrainer

    trainer = BCTrainer(build_bc_config(config, config.seeds[0]), dataset,
                        _env_factory(config)())
    batches = math.ceil(trainer.num_samples / trainer.config.batch_size)
    epoch = [0]

    def one_epoch():
        trainer.run_epoch(epoch[0])
        epoch[0] += 1

    return time_callable(one_epoch, iterations, warmup, units_per_call=batches)


def _inference_timer(config: ExperimentConfig, dataset, iterations: int,
                     warmup: int) -> dict:
    from ..imitation.bc import BCTrainer

    trainer = BCTrainer(build_bc_config(config, config.seeds[0]), dataset,
                        _env_factory(config)())
    policy = trainer.policy()
    env = _env_factory(config)()
    rng = RNGPolicy(0)
    ep = [0]

    def one_episode():
        policy.evaluate(env, 1, rng, stream=f"walltime/ep{ep[0]}")
        ep[0] += 1

    return time_callable(one_episode, iterations, warmup)


def _env_frame_timer(config: ExperimentConfig, iterations: int, warmup: int,
                     frames_per_call: int = 200) -> dict:
    env = _env_factory(config)()
    rng = RNGPolicy(0)
    a_dim = env.action_dim
    state = {"t": 0, "live": False, "episode": 0}

    def run_frames():
        for _ in range(frames_per_call):
            if not state["live"]:
                env.reset(rng.child_seed("walltime/episode", state["episode"]))
                state["episode"] += 1
                state["live"] = True
            u = rng.uniform("walltime/act", state["t"] * a_dim + np.arange(a_dim))
            act = (2.0 * u - 1.0).astype(np.float32)
            _, _, done, _ = env.step(act)
            state["t"] += 1
            if done:
                state["live"] = False

    return time_callable(run_frames, iterations, warmup,
                         units_per_call=frames_per_call)


def measure_walltime(config: ExperimentConfig, iterations: int = MIN_ITERATIONS,
                     warmup: int = MIN_WARMUP) -> dict:
    """Wall-time table for one experiment configuration."""
    dataset = load_or_generate_demos(config)
    train = _bc_iteration_timer(config, dataset, iterations, warmup)
    infer = _inference_timer(config, dataset, iterations, warmup)
    frames = _env_frame_timer(config, iterations, warmup)
    return {
        "train_s_per_iteration": train["median_s"],
        "inference_s_per_episode": infer["median_s"],
        "env_s_per_1k_frames": frames["median_s"] * 1000.0,
        "amortized": {"train": train["amortized"], "inference": infer["amortized"],
                      "env": frames["amortized"]},
    }


def compare_bc_iteration(config: ExperimentConfig, iterations: int = MIN_ITERATIONS,
                         warmup: int = MIN_WARMUP) -> dict:
    """Cached-frozen vs. scratch pixel-forward training iteration time.

    Shares one demo set; only the method differs. The cached path skips
    every per-batch encoder forward, which is the point being measured.
    """
    import dataclasses as dc

    dataset = load_or_generate_demos(config)
    cached_cfg = dc.replace(config, method="pretrained_frozen")
    scratch_cfg = dc.replace(config, method="lfs")
    cached = _bc_iteration_timer(cached_cfg, dataset, iterations, warmup)
    scratch = _bc_iteration_timer(scratch_cfg, dataset, iterations, warmup)
    return {
        "cached_s_per_iteration": cached["median_s"],
        "scratch_s_per_iteration": scratch["median_s"],
        "cached_faster": cached["median_s"] < scratch["median_s"],
        "speedup": scratch["median_s"] / cached["median_s"],
    }
