"""Seed fan-out for configured experiments.

One module-level function runs a single seed so worker processes can
import it; the orchestrator validates everything upfront, skips seeds
whose records already sit on disk under the config fingerprint, and
aggregates whatever survives. Sequential and parallel execution produce
identical per-seed records because each seed derives all randomness from
its own (config, seed) pair.
"""

from __future__ import annotations

import dataclasses
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor

from ..augment import AugmentationSpec, DistractorSource, JitterParams
from ..encoders import BackendSpec
from ..envdata import generate_demos, load_demos, make_env, wrap_random_colors, wrap_video_background
from ..errors import ConfigurationError, OutputPathError
from ..imitation import BCConfig, finetune_pretrained, train_bc
from ..rl import OffPolicyConfig, OnPolicyConfig, train_offpolicy, train_onpolicy
from .config import FINETUNE_METHODS, ExperimentConfig
from .report import ExperimentReport, aggregate_records, save_report

log = logging.getLogger(__name__)

SCORE_KEYS = {"bc": "top3_score", "offpolicy": "best_normalized", "onpolicy": "best_normalized"}


def _mock_backend_spec(config: ExperimentConfig, mode: str) -> BackendSpec:
    over = dict(config.backend)
    over.setdefault("native_resolution", 36)
    over.setdefault("feature_dim", 128)
    over.setdefault("channels", 8)
    return BackendSpec(kind="mock", mode=mode, **over)


def backend_spec_for(config: ExperimentConfig) -> BackendSpec:
    """Resolve the method name into a backend declaration."""
    method = config.method
    if method.startswith("lfs"):
        variant = config.backend.get("variant", "bc" if config.algorithm == "bc" else "offpolicy")
        over = {k: v for k, v in config.backend.items() if k != "variant"}
        return BackendSpec(kind="scratch", variant=variant, **over)
    if method == "pretrained_frozen":
        return _mock_backend_spec(config, "frozen")
    if method in FINETUNE_METHODS:
        return _mock_backend_spec(config, "finetune")
    raise ConfigurationError(f"method {method!r} has no backend mapping")


def augmentation_for(config: ExperimentConfig) -> AugmentationSpec:
    """Resolve the method name into the BC-time augmentation pipeline."""
    a = config.augment
    pad = int(a.get("pad", 4))
    shift = AugmentationSpec(kind="shift", pad=pad)
    if config.method in ("lfs", "pretrained_frozen", "pretrained_finetune"):
        return AugmentationSpec(kind="none")
    if config.method in ("lfs_aug", "pretrained_finetune_aug"):
        return shift
    if config.method == "lfs_aug_jitter":
        jitter = AugmentationSpec(kind="jitter", jitter=JitterParams(**a.get("jitter", {})))
        return AugmentationSpec(kind="composite", children=(shift, jitter))
    if config.method == "lfs_aug_overlay":
        pool = DistractorSource.from_noise(
            int(a.get("overlay_pool", 16)),
            (config.resolution, config.resolution),
            seed=int(a.get("overlay_seed", 99)),
        )
        overlay = AugmentationSpec(kind="overlay", alpha=float(a.get("alpha", 0.5)),
                                   distractors=pool)
        return AugmentationSpec(kind="composite", children=(shift, overlay))
    raise ConfigurationError(f"method {config.method!r} has no augmentation mapping")


def _env_factory(config: ExperimentConfig):
    kwargs = dict(config.env)
    res, hor = config.resolution, config.horizon
    return lambda: make_env(resolution=res, horizon=hor, **kwargs)


def build_bc_config(config: ExperimentConfig, seed: int) -> BCConfig:
    fields = {f.name for f in dataclasses.fields(BCConfig)}
    extra = set(config.bc) - fields
    if extra:
        raise ConfigurationError(f"unknown bc config keys: {sorted(extra)}")
    kwargs = dict(config.bc)
    kwargs.setdefault("stack_depth", config.stack_depth)
    kwargs.setdefault("eval_episodes", config.eval_episodes)
    return BCConfig(backend=backend_spec_for(config),
                    augmentation=augmentation_for(config),
                    seed=seed, **kwargs)


def _rl_config(config: ExperimentConfig, seed: int, cls, overrides: dict):
    fields = {f.name for f in dataclasses.fields(cls)}
    extra = set(overrides) - fields
    if extra:
        raise ConfigurationError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    kwargs = dict(overrides)
    kwargs.setdefault("stack_depth", config.stack_depth)
    if config.method == "lfs":
        kwargs["shift_pad"] = 0
    backend = None if config.method.startswith("lfs") else backend_spec_for(config)
    if backend is None and config.backend:
        backend = backend_spec_for(config)
    return cls(backend=backend, seed=seed, **kwargs)


def load_or_generate_demos(config: ExperimentConfig):
    if config.demos_path is not None:
        return load_demos(config.demos_path)
    env = _env_factory(config)()
    return generate_demos(env, config.demo_count, config.demo_seed, task_id=config.task)


def run_seed(config: ExperimentConfig, seed: int) -> dict:
    """Train one seed of the configured experiment; returns a metrics record."""
    env = _env_factory(config)()
    if config.algorithm == "bc":
        dataset = load_or_generate_demos(config)
        bc_cfg = build_bc_config(config, seed)
        trainer = finetune_pretrained if config.method in FINETUNE_METHODS else train_bc
        result = trainer(bc_cfg, dataset, env)
    elif config.algorithm == "offpolicy":
        rl_cfg = _rl_config(config, seed, OffPolicyConfig, config.offpolicy)
        result = train_offpolicy(_env_factory(config), rl_cfg)
    else:
        rl_cfg = _rl_config(config, seed, OnPolicyConfig, config.onpolicy)
        result = train_onpolicy(_env_factory(config), rl_cfg)
    record = result.to_dict()
    record["seed"] = seed
    record["score"] = record[SCORE_KEYS[config.algorithm]]
    return record


def _run_seed_payload(payload: tuple[dict, int]) -> dict:
    cfg_dict, seed = payload
    return run_seed(ExperimentConfig.from_dict(cfg_dict), seed)


def _seed_record_path(config: ExperimentConfig, seed: int) -> str:
    return os.path.join(config.out_dir, f"{config.fingerprint()}_seed{seed}.json")


def check_output_dir(path: str) -> None:
    """Fail before any compute if results cannot be persisted."""
    try:
        os.makedirs(path, exist_ok=True)
        probe = os.path.join(path, ".write_probe")
        with open(probe, "w") as fh:
            fh.write("ok")
        os.remove(probe)
    except OSError as e:
        raise OutputPathError(f"output directory {path!r} is not writable: {e}") from e


def run_experiment(config: ExperimentConfig) -> ExperimentReport:
    """Run every seed, aggregate, persist the report, return it.

    Completed seeds found on disk (same fingerprint) are reused instead of
    recomputed, so interrupted sweeps resume where they stopped. Failing
    seeds are logged and flagged; the survivors still aggregate.
    """
    check_output_dir(config.out_dir)
    # surface method/algorithm/override mistakes before any training
    if config.algorithm == "bc":
        build_bc_config(config, config.seeds[0])
    elif config.algorithm == "offpolicy":
        _rl_config(config, config.seeds[0], OffPolicyConfig, config.offpolicy)
    else:
        _rl_config(config, config.seeds[0], OnPolicyConfig, config.onpolicy)

    records: dict[int, dict] = {}
    failed: dict[int, str] = {}
    pending: list[int] = []
    for seed in config.seeds:
        path = _seed_record_path(config, seed)
        if os.path.exists(path):
            with open(path) as fh:
                records[seed] = json.load(fh)
            log.info("seed %d: reusing persisted record %s", seed, path)
        else:
            pending.append(seed)

    if pending and config.workers > 1:
        payloads = [(config.to_dict(), s) for s in pending]
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            futures = {s: pool.submit(_run_seed_payload, p) for s, p in zip(pending, payloads)}
        for seed in pending:
            try:
                records[seed] = futures[seed].result()
            except Exception as e:
                failed[seed] = str(e)
                log.warning("seed %d failed: %s", seed, e)
    else:
        for seed in pending:
            try:
                records[seed] = run_seed(config, seed)
            except Exception as e:
                failed[seed] = str(e)
                log.warning("seed %d failed: %s", seed, e)

    for seed, record in records.items():
        path = _seed_record_path(config, seed)
        if not os.path.exists(path):
            with open(path, "w") as fh:
                json.dump(record, fh)

    ordered = [records[s] for s in config.seeds if s in records]
    report = ExperimentReport(
        config=config.to_dict(),
        fingerprint=config.fingerprint(),
        records=ordered,
        aggregate=aggregate_records(ordered),
        partial=bool(failed),
        failed_seeds={str(k): v for k, v in failed.items()},
    )
    save_report(report, os.path.join(config.out_dir, f"{config.fingerprint()}_report.json"))
    return report


ROBUSTNESS_CONDITIONS = ("clean", "random_colors", "video_background")


def evaluate_robustness(config: ExperimentConfig, wrapper_seed: int = 0) -> dict:
    """Zero-shot transfer of trained BC policies to perturbed appearances.

    Trains one policy per seed on the clean environment, then evaluates it
    unchanged under each perturbation wrapper. Returns
    {condition: {"per_seed": [...], "mean": ...}}.
    """
    if config.algorithm != "bc":
        raise ConfigurationError("robustness evaluation runs on behavior cloning only")
    from ..imitation.bc import BCTrainer

    dataset = load_or_generate_demos(config)
    table: dict = {c: {"per_seed": []} for c in ROBUSTNESS_CONDITIONS}
    for seed in config.seeds:
        env = _env_factory(config)()
        bc_cfg = build_bc_config(config, seed)
        trainer = BCTrainer(bc_cfg, dataset, env)
        trainer.run()
        policy = trainer.policy()
        conditions = {
            "clean": _env_factory(config)(),
            "random_colors": wrap_random_colors(_env_factory(config)(), seed=wrapper_seed),
            "video_background": wrap_video_background(_env_factory(config)(), seed=wrapper_seed),
        }
        for name, wrapped in conditions.items():
            success, _ = policy.evaluate(wrapped, config.eval_episodes, trainer.rng,
                                         stream=f"robustness/{name}")
            table[name]["per_seed"].append(float(success))
    for name in table:
        vals = table[name]["per_seed"]
        table[name]["mean"] = sum(vals) / len(vals)
    return table
