"""Experiment configuration: method roster, file loading, overrides,
fingerprints.

An experiment is (method, algorithm, task, seeds) plus nested override
mappings for the environment and the per-algorithm trainer configs. The
method names the representation/augmentation recipe; the algorithm names
the trainer. Everything that can change a result is part of the
fingerprint; output paths and worker counts are not.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from importlib import resources

import yaml

from ..errors import ConfigurationError

METHODS = (
    "lfs",
    "lfs_aug",
    "lfs_aug_jitter",
    "lfs_aug_overlay",
    "pretrained_frozen",
    "pretrained_finetune",
    "pretrained_finetune_aug",
)
ALGORITHMS = ("bc", "offpolicy", "onpolicy")
TASKS = ("reach",)

# methods whose backbone updates during training; RL keeps external
# backbones frozen, so finetune methods are BC-only
FINETUNE_METHODS = ("pretrained_finetune", "pretrained_finetune_aug")
# RL augmentation is the shift kernel or nothing; jitter/overlay recipes
# have no trainer hook outside behavior cloning
RL_METHODS = ("lfs", "lfs_aug", "pretrained_frozen")


@dataclass(frozen=True)
class ExperimentConfig:
    """Declarative description of one experiment (all seeds included)."""

    method: str = "lfs_aug"
    algorithm: str = "bc"
    task: str = "reach"
    seeds: tuple[int, ...] = (0, 1, 2)
    resolution: int = 32
    horizon: int = 50
    demo_count: int = 100
    demo_seed: int = 7
    demos_path: str | None = None
    stack_depth: int = 3
    eval_episodes: int = 50
    env: dict = field(default_factory=dict)
    backend: dict = field(default_factory=dict)
    augment: dict = field(default_factory=dict)
    bc: dict = field(default_factory=dict)
    offpolicy: dict = field(default_factory=dict)
    onpolicy: dict = field(default_factory=dict)
    out_dir: str = "runs"
    workers: int = 1

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(
                f"unknown method {self.method!r}, expected one of {METHODS}"
            )
        if self.algorithm not in ALGORITHMS:
            raise ConfigurationError(
                f"unknown algorithm {self.algorithm!r}, expected one of {ALGORITHMS}"
            )
        if self.task not in TASKS:
            raise ConfigurationError(f"unknown task {self.task!r}")
        if not self.seeds:
            raise ConfigurationError("seeds must be non-empty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError(f"duplicate seeds in {self.seeds}")
        if self.algorithm != "bc" and self.method not in RL_METHODS:
            raise ConfigurationError(
                f"method {self.method!r} requires algorithm 'bc'; "
                f"reinforcement learning supports {RL_METHODS}"
            )
        if self.resolution < 16:
            raise ConfigurationError(f"resolution must be >= 16, got {self.resolution}")
        if self.demo_count < 1 or self.eval_episodes < 1:
            raise ConfigurationError("demo_count and eval_episodes must be >= 1")
        if self.workers < 1:
            raise ConfigurationError(f"workers must be >= 1, got {self.workers}")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["seeds"] = list(self.seeds)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigurationError(f"unknown config keys: {sorted(extra)}")
        d = dict(d)
        if "seeds" in d:
            d["seeds"] = tuple(d["seeds"])
        return cls(**d)

    def fingerprint(self) -> str:
        """Hash of every result-affecting field, stable across runs."""
        d = self.to_dict()
        d.pop("out_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _parse_scalar(text: str):
    # yaml scalar rules give "1" -> int, "0.5" -> float, "true" -> bool
    return yaml.safe_load(text)


def apply_override(data: dict, spec: str) -> None:
    """Apply one ``dotted.key=value`` override in place."""
    if "=" not in spec:
        raise ConfigurationError(f"override must look like key=value, got {spec!r}")
    key, _, raw = spec.partition("=")
    parts = key.strip().split(".")
    if not all(parts):
        raise ConfigurationError(f"malformed override key {key!r}")
    node = data
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigurationError(f"override key {key!r} descends into a scalar")
        node = nxt
    node[parts[-1]] = _parse_scalar(raw)


def load_config(path: str | None = None, preset: str | None = None,
                overrides: list[str] | None = None,
                seeds: tuple[int, ...] | None = None,
                out_dir: str | None = None) -> ExperimentConfig:
    """Merge preset < file < overrides < explicit flags into a config."""
    data: dict = {}
    if preset is not None:
        data.update(load_preset_dict(preset))
    if path is not None:
        with open(path) as fh:
            loaded = yaml.safe_load(fh) or {}
        if not isinstance(loaded, dict):
            raise ConfigurationError(f"config file {path} must hold a mapping")
        data.update(loaded)
    for spec in overrides or []:
        apply_override(data, spec)
    if seeds is not None:
        data["seeds"] = list(seeds)
    if out_dir is not None:
        data["out_dir"] = out_dir
    return ExperimentConfig.from_dict(data)


def list_presets() -> list[str]:
    root = resources.files(__package__) / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def load_preset_dict(name: str) -> dict:
    root = resources.files(__package__) / "presets"
    candidate = root / f"{name}.yaml"
    if not candidate.is_file():
        raise ConfigurationError(
            f"unknown preset {name!r}, available: {list_presets()}"
        )
    data = yaml.safe_load(candidate.read_text())
    if not isinstance(data, dict):
        raise ConfigurationError(f"preset {name!r} must hold a mapping")
    return data


def describe_config(config: ExperimentConfig) -> str:
    """Full config as yaml, suitable for reuse as a config file."""
    return yaml.safe_dump(config.to_dict(), sort_keys=True)
