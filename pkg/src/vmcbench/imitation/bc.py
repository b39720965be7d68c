"""Behavior cloning: regress expert actions from stacked frames.

Training runs either in pixel space (scratch, finetune, or any augmented
configuration) or on exact cached features (frozen backend, no
augmentation). Both paths draw batches from the same counter-based streams,
so switching paths never changes the sample order.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field, replace

import numpy as np

from ..augment import AugmentationSpec, apply_stack_consistent
from ..core.metrics import top_k_mean
from ..core.rng import RNGPolicy
from ..core.types import UINT8, DemoDataset, MetricSeries, ObservationBatch
from ..encoders import (
    BackendSpec,
    RepresentationBackend,
    build_backend,
    build_feature_cache,
    build_policy_head,
    flare_backward,
    flare_fuse,
    fused_dim,
)
from ..encoders.backend import ExternalBackend, ScratchBackend, _net_from_arch
from ..encoders.heads import PolicyHead
from ..envdata.env import Environment
from ..errors import ConfigurationError, InsufficientDataError, InvalidModeError
from ..imageops import bilinear_resize, to_unit_float
from ..nn import make_optimizer, zero_grad

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BCConfig:
    backend: BackendSpec = field(default_factory=BackendSpec)
    augmentation: AugmentationSpec = field(default_factory=lambda: AugmentationSpec("none"))
    epochs: int = 100
    eval_every: int = 2
    eval_episodes: int = 10
    batch_size: int = 128
    learning_rate: float = 1e-3
    backbone_lr: float | None = None
    optimizer: str = "adam"
    stack_depth: int = 3
    demo_count: int | None = None
    seed: int = 0
    head_hidden: tuple[int, ...] = (256, 256, 256)
    trunk_dim: int | None = None
    use_cache: bool = True
    early_stop_top3: float | None = None

    def __post_init__(self) -> None:
        if not (self.epochs >= self.eval_every >= 1):
            raise ConfigurationError(
                f"need epochs >= eval_every >= 1, got {self.epochs} / {self.eval_every}"
            )
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate < 0 or (self.backbone_lr is not None and self.backbone_lr < 0):
            raise ConfigurationError("learning rates must be >= 0")
        if self.stack_depth < 1:
            raise ConfigurationError(f"stack_depth must be >= 1, got {self.stack_depth}")
        if self.eval_episodes < 1:
            raise ConfigurationError("eval_episodes must be >= 1")


@dataclass(frozen=True)
class BCResult:
    """Training outcome: evaluation series, top-3 score, losses, timings."""

    series: MetricSeries
    top3_score: float
    final_score: float
    train_losses: tuple[float, ...]
    walltime: dict

    def to_dict(self) -> dict:
        return {
            "series": self.series.to_dict(),
            "top3_score": self.top3_score,
            "final_score": self.final_score,
            "train_losses": list(self.train_losses),
            "walltime": self.walltime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BCResult":
        return cls(
            series=MetricSeries.from_dict(d["series"]),
            top3_score=float(d["top3_score"]),
            final_score=float(d["final_score"]),
            train_losses=tuple(float(v) for v in d["train_losses"]),
            walltime=dict(d["walltime"]),
        )


class BCPolicy:
    """Frozen snapshot of a trained visuomotor policy."""

    def __init__(self, backend: RepresentationBackend, head: PolicyHead,
                 stack_depth: int, head_meta: dict):
        self.backend = backend
        self.head = head
        self.stack_depth = stack_depth
        self.head_meta = head_meta

    def act(self, stacked_frames: np.ndarray) -> np.ndarray:
        """uint8 [T*C, H, W] observation stack -> action."""
        batch = ObservationBatch(stacked_frames[None], stack_depth=self.stack_depth)
        feats = _encode_batch(self.backend, batch, train=False)
        return np.asarray(self.head.forward(feats, train=False)[0], dtype=np.float32)

    def evaluate(self, env: Environment, episodes: int, rng: RNGPolicy,
                 stream: str = "eval/episode") -> tuple[float, float]:
        """(success rate, mean return) over fixed derived episode seeds."""
        successes, returns = [], []
        for i in range(episodes):
            seed = rng.child_seed(stream, i)
            obs = env.reset(seed)
            stack = [obs] * self.stack_depth
            done = False
            total = 0.0
            success = False
            while not done:
                a = self.act(np.concatenate(stack, axis=0))
                obs, r, done, info = env.step(a)
                stack = stack[1:] + [obs]
                total += r
                success = bool(info["success"])
            successes.append(success)
            returns.append(total)
        return float(np.mean(successes)), float(np.mean(returns))


def _encode_batch(backend: RepresentationBackend, batch: ObservationBatch,
                  train: bool) -> np.ndarray:
    """Pixel-space encode + fuse; the training-path twin of backend_forward."""
    frames = to_unit_float(batch.frames())
    if backend.source == "external" and backend.input_hw is not None:
        frames = bilinear_resize(frames, backend.input_hw)
    feats = backend.forward(frames, train=train)
    n, t = batch.batch_size, batch.stack_depth
    if t == 1:
        return feats
    return flare_fuse(feats.reshape(n, t, backend.output_dim))


class BCTrainer:
    """Owns networks, data order, and the epoch loop."""

    def __init__(self, config: BCConfig, dataset: DemoDataset, env: Environment):
        if dataset.num_episodes < 1:
            raise InsufficientDataError("behavior cloning needs at least one episode")
        if config.demo_count is not None and config.demo_count > dataset.num_episodes:
            raise InsufficientDataError(
                f"requested {config.demo_count} demos, dataset holds {dataset.num_episodes}"
            )
        self.config = config
        self.env = env
        self.rng = RNGPolicy(config.seed)
        self.dataset = dataset

        count = config.demo_count or dataset.num_episodes
        order = self.rng.generator("demos/subsample").permutation(dataset.num_episodes)
        self.episode_ids = tuple(int(i) for i in order[:count])

        frames = [dataset.episodes[i].observations for i in self.episode_ids]
        actions = [dataset.episodes[i].actions for i in self.episode_ids]
        self.frames = np.concatenate(frames, axis=0)
        self.actions = np.concatenate(actions, axis=0).astype(np.float32)
        offsets = np.concatenate([[0], np.cumsum([f.shape[0] for f in frames])])
        t = config.stack_depth
        rows = []
        for e, f in enumerate(frames):
            length = f.shape[0]
            idx = np.arange(length)[:, None] + np.arange(-t + 1, 1)[None, :]
            rows.append(offsets[e] + np.maximum(idx, 0))
        self.stack_rows = np.concatenate(rows, axis=0)
        self.num_samples = self.stack_rows.shape[0]
        if self.num_samples < 1:
            raise InsufficientDataError("no training samples after subsampling")

        c, h, w = dataset.frame_shape
        init = self.rng.generator("init/backend")
        self.backend = build_backend(config.backend, (c, h, w), init)
        self.head = build_policy_head(
            fused_dim(t, self.backend.output_dim),
            dataset.action_dim,
            self.rng.generator("init/head"),
            hidden=config.head_hidden,
            leading_batchnorm=self.backend.source == "external",
            trunk_dim=config.trunk_dim,
        )
        self.head_meta = {
            "hidden": list(config.head_hidden),
            "leading_batchnorm": self.backend.source == "external",
            "trunk_dim": config.trunk_dim,
            "action_dim": dataset.action_dim,
        }

        aug = config.augmentation.kind != "none"
        self.cached = (self.backend.mode == "frozen" and not aug and config.use_cache)
        if self.backend.mode == "frozen" and aug and config.use_cache:
            log.warning(
                "augmentation requires pixel-space forward passes; feature "
                "caching is disabled for this run"
            )
        self.cache = None
        if self.cached:
            sub = DemoDataset(
                tuple(dataset.episodes[i] for i in self.episode_ids), dataset.task_id
            )
            self.cache = build_feature_cache(self.backend, sub)

        self.head_opt = make_optimizer(config.optimizer, self.head.params(),
                                       config.learning_rate)
        backbone_lr = config.learning_rate if config.backbone_lr is None else config.backbone_lr
        trainable_backend = [p for p in self.backend.params() if not p.frozen]
        self.backend_opt = (
            make_optimizer(config.optimizer, trainable_backend, backbone_lr)
            if trainable_backend else None
        )
        self._eval_env = env

    def _batch_order(self, epoch: int) -> np.ndarray:
        return self.rng.generator("bc/shuffle", counter=epoch).permutation(self.num_samples)

    def run_epoch(self, epoch: int) -> float:
        """One pass over the data; returns mean training loss."""
        cfg = self.config
        order = self._batch_order(epoch)
        t = cfg.stack_depth
        losses = []
        backend_train = self.backend.mode in ("trainable", "finetune")
        for start in range(0, self.num_samples, cfg.batch_size):
            sel = order[start: start + cfg.batch_size]
            target = self.actions[self.stack_rows[sel, -1]]
            counter_base = epoch * self.num_samples + start
            zero_grad(self.head.params())
            if self.backend_opt is not None:
                zero_grad(self.backend.params())
            if self.cached:
                fused = flare_fuse(self.cache.features[self.stack_rows[sel]])
                pred = self.head.forward(fused, train=True)
                dpred = (2.0 / pred.size) * (pred - target)
                self.head.backward(dpred.astype(np.float32))
            else:
                stacks = self.frames[self.stack_rows[sel]]
                b, _, c, h, w = stacks.shape
                batch = ObservationBatch(
                    np.ascontiguousarray(stacks.reshape(b, t * c, h, w)),
                    stack_depth=t, value_domain=UINT8,
                )
                batch = apply_stack_consistent(cfg.augmentation, batch, self.rng,
                                               counter_base=counter_base)
                feats = _encode_batch(self.backend, batch, train=backend_train)
                pred = self.head.forward(feats, train=True)
                dpred = (2.0 / pred.size) * (pred - target)
                dfused = self.head.backward(dpred.astype(np.float32))
                # identity backends train (mode-wise) but own no parameters
                if backend_train and self.backend_opt is not None:
                    if t == 1:
                        dframe = dfused
                    else:
                        dframe = flare_backward(dfused, t, self.backend.output_dim)
                        dframe = dframe.reshape(b * t, self.backend.output_dim)
                    self.backend.backward(dframe)
            loss = float(np.mean((pred - target) ** 2))
            losses.append(loss)
            self.head_opt.step()
            if self.backend_opt is not None:
                self.backend_opt.step()
        return float(np.mean(losses))

    def policy(self) -> BCPolicy:
        return BCPolicy(self.backend, self.head, self.config.stack_depth, self.head_meta)

    def evaluate(self, env: Environment | None = None) -> float:
        sr, _ = self.policy().evaluate(env or self._eval_env,
                                       self.config.eval_episodes, self.rng)
        return sr

    def run(self) -> BCResult:
        cfg = self.config
        steps, scores = [], []
        losses = []
        epoch_times, eval_times = [], []
        for epoch in range(cfg.epochs):
            t0 = time.perf_counter()
            losses.append(self.run_epoch(epoch))
            epoch_times.append(time.perf_counter() - t0)
            if (epoch + 1) % cfg.eval_every == 0:
                t1 = time.perf_counter()
                score = self.evaluate()
                eval_times.append((time.perf_counter() - t1) / cfg.eval_episodes)
                steps.append(epoch + 1)
                scores.append(score)
                if (cfg.early_stop_top3 is not None and len(scores) >= 3
                        and top_k_mean(np.array(scores), 3) >= cfg.early_stop_top3):
                    break
        series = MetricSeries(tuple(steps), tuple(scores), metric_kind="success_rate")
        k = min(3, len(scores))
        walltime = {
            "train_s_per_epoch": float(np.median(epoch_times)),
            "train_s_per_update": float(np.median(epoch_times)
                                        / max(1, -(-self.num_samples // cfg.batch_size))),
            "eval_s_per_episode": float(np.median(eval_times)) if eval_times else 0.0,
        }
        return BCResult(
            series=series,
            top3_score=top_k_mean(np.array(scores), k),
            final_score=scores[-1],
            train_losses=tuple(losses),
            walltime=walltime,
        )


def train_bc(config: BCConfig, dataset: DemoDataset, env: Environment) -> BCResult:
    return BCTrainer(config, dataset, env).run()


def finetune_pretrained(config: BCConfig, dataset: DemoDataset, env: Environment) -> BCResult:
    """Behavior cloning that adapts an external representation end to end."""
    if config.backend.kind in ("scratch", "identity"):
        raise InvalidModeError("finetuning requires an external backend")
    if config.backend.mode != "finetune":
        raise InvalidModeError(
            f"finetune_pretrained needs backend mode 'finetune', got {config.backend.mode!r}"
        )
    return BCTrainer(config, dataset, env).run()


def data_efficiency_sweep(
    config: BCConfig, dataset: DemoDataset, env: Environment,
    counts: tuple[int, ...],
) -> dict[int, BCResult]:
    """Train at several demo counts; smaller subsets nest inside larger ones.

    Subsets are prefixes of one seed-derived episode permutation, so the
    10-demo run trains on a subset of the 25-demo run's episodes.
    """
    if not counts:
        raise ConfigurationError("sweep needs at least one demo count")
    if max(counts) > dataset.num_episodes:
        raise InsufficientDataError(
            f"sweep count {max(counts)} exceeds dataset size {dataset.num_episodes}"
        )
    if any(c < 1 for c in counts):
        raise ConfigurationError("sweep counts must be >= 1")
    results = {}
    for count in counts:
        results[count] = train_bc(replace(config, demo_count=count), dataset, env)
    return results


def save_policy(policy: BCPolicy, path: str) -> None:
    backend = policy.backend
    if isinstance(backend, ScratchBackend):
        backend_meta = {"kind": "scratch", "variant": backend.spec.variant,
                        "input_shape": list(backend.spec.input_shape)}
    elif isinstance(backend, ExternalBackend):
        backend_meta = {"kind": "external", "name": backend.name, "arch": backend.arch,
                        "frame_channels": backend.frame_channels,
                        "input_hw": list(backend.input_hw),
                        "output_dim": backend.output_dim, "mode": backend.mode}
    else:
        backend_meta = {"kind": "identity",
                        "input_shape": [backend.frame_channels, *backend.input_hw]}
    meta = {
        "backend": backend_meta,
        "head": policy.head_meta,
        "stack_depth": policy.stack_depth,
    }
    arrays = {f"backend/{n}": a for n, a in backend.state_arrays()}
    arrays.update({f"head/{n}": a for n, a in policy.head.net.state_arrays()})
    np.savez(path, meta=np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8), **arrays)


def load_policy(path: str) -> BCPolicy:
    from ..encoders import build_scratch_encoder, make_identity_backend, set_mode

    with np.load(path) as z:
        meta = json.loads(bytes(z["meta"]).decode())
        bm = meta["backend"]
        dummy = np.random.default_rng(0)
        if bm["kind"] == "scratch":
            backend = build_scratch_encoder(bm["variant"], tuple(bm["input_shape"]), dummy)
        elif bm["kind"] == "external":
            arch = [tuple(e) for e in bm["arch"]]
            net = _net_from_arch(arch, dummy)
            backend = ExternalBackend(bm["name"], arch, net, int(bm["frame_channels"]),
                                      tuple(bm["input_hw"]), int(bm["output_dim"]))
            if bm["mode"] != "frozen":
                set_mode(backend, bm["mode"])
        else:
            shape = bm["input_shape"]
            backend = make_identity_backend((shape[0], shape[1], shape[2]))
        backend_arrays = {n[len("backend/"):]: z[n] for n in z.files
                          if n.startswith("backend/")}
        if backend.net is not None:
            backend.net.load_state_dict(backend_arrays)
        hm = meta["head"]
        head = build_policy_head(
            fused_dim(meta["stack_depth"], backend.output_dim), hm["action_dim"], dummy,
            hidden=tuple(hm["hidden"]), leading_batchnorm=hm["leading_batchnorm"],
            trunk_dim=hm["trunk_dim"],
        )
        head.net.load_state_dict({n[len("head/"):]: z[n] for n in z.files
                                  if n.startswith("head/")})
    return BCPolicy(backend, head, int(meta["stack_depth"]), hm)
