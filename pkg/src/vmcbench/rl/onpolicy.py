"""On-policy clipped-surrogate training from pixels and proprioception.

Rollouts are collected unaugmented; GAE advantages and value-regression
returns are computed once from those stored observations and never
touched again. During the update the current policy and value outputs are
recomputed under random shift, so augmentation perturbs the losses but
not the targets. Episodes that hit the horizon bootstrap with the value
of the final observation; true successes bootstrap with zero.

The trainer steps a fixed pool of environments in lockstep with derived
per-slot episode seeds, making the collected transitions independent of
pool scheduling.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from ..augment.ops import random_shift
from ..core.metrics import normalize_return
from ..core.rng import RNGPolicy
from ..core.types import ObservationBatch
from ..encoders.backend import BackendSpec, RepresentationBackend, build_backend
from ..encoders.fusion import flare_backward, flare_fuse, fused_dim
from ..encoders.scratch import build_scratch_encoder
from ..errors import (
    InvalidModeError,
    InvalidParameterError,
    NumericalError,
    ShapeError,
)
from ..imageops import bilinear_resize, to_unit_float
from ..nn import (
    LayerNorm,
    Linear,
    Parameter,
    ReLU,
    Sequential,
    Tanh,
    clip_grad_norm,
    make_optimizer,
    zero_grad,
)
from .evaluation import evaluate_policy, reference_returns
from .gae import compute_gae
from .rollout import EnvPool

log = logging.getLogger(__name__)

_LOG_2PI = float(np.log(2.0 * np.pi))


@dataclass(frozen=True)
class OnPolicyConfig:
    """Hyperparameters for the on-policy trainer.

    clip_eps / gamma / lam follow the cited clipped-surrogate convention;
    shift pad defaults to 10 at the native resolution and scales down with
    the desk presets.
    """

    clip_eps: float = 0.2
    gamma: float = 0.99
    lam: float = 0.95
    rollout_steps: int = 256
    num_envs: int = 4
    update_epochs: int = 8
    minibatch_size: int = 256
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    lr: float = 3e-4
    proj_dim: int = 64
    trunk_dim: int = 64
    hidden: tuple = (64, 64)
    stack_depth: int = 1
    shift_pad: int = 10
    log_std_init: float = -0.5
    use_proprio: bool = True
    normalize_advantages: bool = True
    max_grad_norm: float | None = 0.5
    total_steps: int = 100_000
    eval_every_steps: int = 10_000
    eval_episodes: int = 10
    seed: int = 0
    backend: BackendSpec | None = None
    early_stop_normalized: float | None = None

    def __post_init__(self):
        if not 0.0 < self.clip_eps < 1.0:
            raise InvalidParameterError(f"clip_eps must lie in (0, 1), got {self.clip_eps}")
        if not 0.0 <= self.gamma <= 1.0:
            raise InvalidParameterError(f"gamma must lie in [0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise InvalidParameterError(f"lam must lie in [0, 1], got {self.lam}")
        if self.rollout_steps < 1 or self.num_envs < 1:
            raise InvalidParameterError("rollout_steps and num_envs must be >= 1")
        if self.update_epochs < 1 or self.minibatch_size < 1:
            raise InvalidParameterError("update_epochs and minibatch_size must be >= 1")
        if self.minibatch_size > self.rollout_steps * self.num_envs:
            raise InvalidParameterError(
                f"minibatch_size {self.minibatch_size} exceeds the "
                f"{self.rollout_steps * self.num_envs}-sample segment"
            )
        if self.value_coef < 0 or self.entropy_coef < 0:
            raise InvalidParameterError("loss coefficients must be >= 0")
        if self.proj_dim < 1 or self.trunk_dim < 1:
            raise InvalidParameterError("proj_dim and trunk_dim must be >= 1")
        if self.stack_depth < 1:
            raise InvalidParameterError(f"stack_depth must be >= 1, got {self.stack_depth}")
        if self.shift_pad < 0:
            raise InvalidParameterError(f"shift_pad must be >= 0, got {self.shift_pad}")
        if self.max_grad_norm is not None and self.max_grad_norm <= 0:
            raise InvalidParameterError("max_grad_norm must be positive or None")
        if self.total_steps < 1 or self.eval_every_steps < 1 or self.eval_episodes < 1:
            raise InvalidParameterError("step budgets and eval cadence must be >= 1")


@dataclass
class RolloutBatch:
    """One collected segment with its frozen targets."""

    observations: np.ndarray   # [N, T*C, H, W] uint8
    proprio: np.ndarray        # [N, P] float32 (P may be 0)
    actions: np.ndarray        # [N, A] float32
    log_probs: np.ndarray      # [N] float64
    rewards: np.ndarray        # [N] float32
    values: np.ndarray         # [N] float64
    advantages: np.ndarray     # [N] float64
    returns: np.ndarray        # [N] float64

    def __post_init__(self):
        n = self.observations.shape[0]
        for name in ("proprio", "actions", "log_probs", "rewards", "values",
                     "advantages", "returns"):
            arr = getattr(self, name)
            if arr.shape[0] != n:
                raise ShapeError(
                    f"rollout field {name} has {arr.shape[0]} rows, expected {n}"
                )
        if not np.all(np.isfinite(self.advantages)):
            raise NumericalError("rollout advantages contain non-finite values")

    def __len__(self) -> int:
        return self.observations.shape[0]


@dataclass
class OnPolicyResult:
    series: list = field(default_factory=list)
    train_losses: list = field(default_factory=list)
    final_normalized: float = 0.0
    best_normalized: float = 0.0
    expert_return: float = 0.0
    random_return: float = 0.0
    env_steps: int = 0
    walltime: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "series": self.series,
            "train_losses": self.train_losses,
            "final_normalized": self.final_normalized,
            "best_normalized": self.best_normalized,
            "expert_return": self.expert_return,
            "random_return": self.random_return,
            "env_steps": self.env_steps,
            "walltime": self.walltime,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "OnPolicyResult":
        return cls(**d)


def _mlp(in_dim: int, hidden: tuple, out_dim: int, rng: np.random.Generator) -> Sequential:
    layers = []
    prev = in_dim
    for h in hidden:
        layers.extend([Linear(prev, h, rng), ReLU()])
        prev = h
    layers.append(Linear(prev, out_dim, rng))
    return Sequential(layers)


class OnPolicyTrainer:
    """Single-owner actor-critic with a shared projection and trunk."""

    def __init__(self, env_factory, config: OnPolicyConfig):
        self.config = config
        self.rng = RNGPolicy(config.seed)
        self.pool = EnvPool(env_factory, config.num_envs, self.rng,
                            stack_depth=config.stack_depth)
        self.eval_env = env_factory()

        probe = self.eval_env.reset(self.rng.child_seed("probe"))
        c, h, w = probe.shape
        self.frame_shape = (c, h, w)
        self.action_dim = self.eval_env.action_dim
        self.proprio_dim = (self.eval_env.proprio().shape[0]
                            if config.use_proprio else 0)
        t = config.stack_depth

        grng = self.rng.generator("init/backend")
        if config.backend is None:
            self.backend: RepresentationBackend = build_scratch_encoder(
                "onpolicy", (c, h, w), grng
            )
        elif config.backend.kind == "scratch":
            self.backend = build_scratch_encoder(config.backend.variant,
                                                 (c, h, w), grng)
        else:
            self.backend = build_backend(config.backend, (c, h, w), grng)
            if self.backend.mode != "frozen":
                raise InvalidModeError(
                    "external backends stay frozen during reinforcement learning"
                )
        self._encoder_trainable = self.backend.source != "external"
        fused = fused_dim(t, self.backend.output_dim)

        hrng = self.rng.generator("init/heads")
        a = self.action_dim
        self.projection = Sequential([
            Linear(fused, config.proj_dim, hrng),
            LayerNorm(config.proj_dim),
            Tanh(),
        ])
        self.trunk = Sequential([
            Linear(config.proj_dim + self.proprio_dim, config.trunk_dim, hrng),
            LayerNorm(config.trunk_dim),
            Tanh(),
        ])
        self.actor_mlp = _mlp(config.trunk_dim, config.hidden, a, hrng)
        self.critic_mlp = _mlp(config.trunk_dim, config.hidden, 1, hrng)
        self.log_std = Parameter(
            np.full(a, config.log_std_init, dtype=np.float32), "log_std"
        )

        self._all_params = (
            [p for p in self.backend.params() if not p.frozen]
            + self.projection.params() + self.trunk.params()
            + self.actor_mlp.params() + self.critic_mlp.params()
            + [self.log_std]
        )
        self.opt = make_optimizer("adam", self._all_params, config.lr)

        self.global_step = 0
        self.iteration = 0
        self._next_eval = config.eval_every_steps
        self.series: list = []
        self.train_losses: list = []
        self.best_normalized = 0.0

        self.random_return, self.expert_return = reference_returns(
            self.eval_env, self.rng, config.eval_episodes
        )

    # ---- model ----

    def _encode(self, stacks_u8: np.ndarray, train: bool) -> np.ndarray:
        x = to_unit_float(stacks_u8)
        n = x.shape[0]
        t = self.config.stack_depth
        c = self.frame_shape[0]
        frames = x.reshape(n * t, c, *x.shape[2:])
        if (self.backend.source == "external"
                and self.backend.input_hw is not None
                and self.backend.input_hw != tuple(x.shape[2:])):
            frames = bilinear_resize(frames, self.backend.input_hw)
        feats = self.backend.forward(
            frames, train=train and self._encoder_trainable
        )
        if t == 1:
            return feats
        return flare_fuse(feats.reshape(n, t, self.backend.output_dim))

    def _policy_value(self, stacks_u8: np.ndarray, proprio: np.ndarray,
                      train: bool) -> tuple[np.ndarray, np.ndarray]:
        feats = self._encode(stacks_u8, train)
        z = self.projection.forward(feats, train=train)
        x = (np.concatenate([z, proprio], axis=1)
             if self.proprio_dim else z)
        g = self.trunk.forward(x, train=train)
        mu = self.actor_mlp.forward(g, train=train).astype(np.float64)
        v = self.critic_mlp.forward(g, train=train)[:, 0].astype(np.float64)
        return mu, v

    def _backward(self, dmu: np.ndarray, dv: np.ndarray,
                  dlog_std: np.ndarray) -> None:
        dg = (self.actor_mlp.backward(dmu.astype(np.float32))
              + self.critic_mlp.backward(dv[:, None].astype(np.float32)))
        dx = self.trunk.backward(dg)
        dz = dx[:, :self.config.proj_dim] if self.proprio_dim else dx
        dfeats = self.projection.backward(dz)
        if self._encoder_trainable:
            t, d = self.config.stack_depth, self.backend.output_dim
            if t > 1:
                dfeats = flare_backward(dfeats, t, d).reshape(-1, d)
            self.backend.backward(np.ascontiguousarray(dfeats, dtype=np.float32))
        self.log_std.accumulate(dlog_std.astype(np.float32))

    def greedy_action_fn(self):
        """Action callback for evaluation; reads proprio off the eval env."""
        def fn(stacked, t):
            prop = (self.eval_env.proprio()[None].astype(np.float32)
                    if self.proprio_dim else np.zeros((1, 0), dtype=np.float32))
            mu, _ = self._policy_value(stacked[None], prop, train=False)
            return np.clip(mu[0], -1.0, 1.0).astype(np.float32)
        return fn

    # ---- collection ----

    def _pool_proprio(self) -> np.ndarray:
        n = self.config.num_envs
        if not self.proprio_dim:
            return np.zeros((n, 0), dtype=np.float32)
        return np.stack([self.pool.proprio(i) for i in range(n)]).astype(np.float32)

    def _value_single(self, stacked: np.ndarray, prop: np.ndarray) -> float:
        _, v = self._policy_value(
            stacked[None],
            prop[None].astype(np.float32) if self.proprio_dim
            else np.zeros((1, 0), dtype=np.float32),
            train=False,
        )
        return float(v[0])

    def collect_segment(self) -> RolloutBatch:
        """One lockstep segment of rollout_steps per slot, with GAE."""
        cfg = self.config
        pool = self.pool
        n, a, steps = cfg.num_envs, self.action_dim, cfg.rollout_steps
        for slot in range(n):
            if not pool.is_live(slot):
                pool.begin_episode(slot)
        obs_l: list = [[] for _ in range(n)]
        prop_l: list = [[] for _ in range(n)]
        act_l: list = [[] for _ in range(n)]
        logp_l: list = [[] for _ in range(n)]
        val_l: list = [[] for _ in range(n)]
        rew_l: list = [[] for _ in range(n)]
        pieces: list = [[] for _ in range(n)]
        piece_start = [0] * n
        base_k = self.iteration * steps

        for k in range(steps):
            obs_b = np.stack([pool.stacked_obs(i) for i in range(n)])
            prop_b = self._pool_proprio()
            mu, _v = self._policy_value(obs_b, prop_b, train=False)
            sigma = np.exp(self.log_std.data.astype(np.float64))
            for slot in range(n):
                counters = (base_k + k) * a + np.arange(a)
                eps = self.rng.normal(f"ppo/act/env{slot}", counters)
                # log-prob of the float32 action actually stored, so an
                # unaugmented recompute with unchanged weights gives ratio 1
                act = (mu[slot] + sigma * eps).astype(np.float32)
                zs = (act.astype(np.float64) - mu[slot]) / sigma
                logp = (-0.5 * float(zs @ zs)
                        - float(np.sum(np.log(sigma)))
                        - 0.5 * a * _LOG_2PI)
                obs_l[slot].append(obs_b[slot])
                prop_l[slot].append(prop_b[slot])
                act_l[slot].append(act)
                logp_l[slot].append(logp)
                val_l[slot].append(float(_v[slot]))
                _, r, done, info = pool.step(slot, act)
                rew_l[slot].append(np.float32(r))
                if done:
                    if bool(info["success"]):
                        boot = 0.0
                    else:
                        # horizon truncation: bootstrap with the value of
                        # the observation the episode ended on
                        boot = self._value_single(pool.stacked_obs(slot),
                                                  pool.proprio(slot))
                    pieces[slot].append((piece_start[slot], k + 1, boot))
                    piece_start[slot] = k + 1
                    pool.begin_episode(slot)
            self.global_step += n

        live_obs = np.stack([pool.stacked_obs(i) for i in range(n)])
        _, v_live = self._policy_value(live_obs, self._pool_proprio(), train=False)
        for slot in range(n):
            if piece_start[slot] < steps:
                pieces[slot].append((piece_start[slot], steps, float(v_live[slot])))

        total = n * steps
        advantages = np.empty(total, dtype=np.float64)
        returns = np.empty(total, dtype=np.float64)
        offset = 0
        for slot in range(n):
            rews = np.asarray(rew_l[slot], dtype=np.float64)
            vals = np.asarray(val_l[slot], dtype=np.float64)
            for s, e, boot in pieces[slot]:
                piece_vals = np.concatenate([vals[s:e], [boot]])
                adv, ret = compute_gae(rews[s:e], piece_vals, cfg.gamma, cfg.lam)
                advantages[offset + s:offset + e] = adv
                returns[offset + s:offset + e] = ret
            offset += steps

        return RolloutBatch(
            observations=np.concatenate([np.stack(o) for o in obs_l]),
            proprio=np.concatenate([np.stack(p) for p in prop_l]).astype(np.float32),
            actions=np.concatenate([np.stack(x) for x in act_l]),
            log_probs=np.concatenate([np.asarray(lp, dtype=np.float64)
                                      for lp in logp_l]),
            rewards=np.concatenate([np.asarray(r, dtype=np.float32)
                                    for r in rew_l]),
            values=np.concatenate([np.asarray(v, dtype=np.float64)
                                   for v in val_l]),
            advantages=advantages,
            returns=returns,
        )

    # ---- update ----

    def update_on_rollout(self, batch: RolloutBatch) -> dict:
        """Clipped-surrogate update over the segment.

        Raises NumericalError before touching any parameter if the batch
        carries non-finite advantages.
        """
        cfg = self.config
        if not np.all(np.isfinite(batch.advantages)):
            raise NumericalError("non-finite advantage in rollout; state unchanged")
        adv_all = batch.advantages
        if cfg.normalize_advantages:
            adv_all = (adv_all - adv_all.mean()) / (adv_all.std() + 1e-8)
        n_total = len(batch)
        a = self.action_dim
        sums = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        count = 0
        for epoch in range(cfg.update_epochs):
            order = self.rng.generator(
                "ppo/shuffle", counter=self.iteration * cfg.update_epochs + epoch
            ).permutation(n_total)
            for start in range(0, n_total, cfg.minibatch_size):
                idx = order[start:start + cfg.minibatch_size]
                m = len(idx)
                obs_mb = ObservationBatch(batch.observations[idx],
                                          stack_depth=cfg.stack_depth)
                if cfg.shift_pad > 0:
                    cb = (self.iteration * cfg.update_epochs + epoch) * n_total + start
                    obs_mb = random_shift(obs_mb, cfg.shift_pad, self.rng, cb,
                                          stream="ppo/shift")
                zero_grad(self._all_params)
                mu, v = self._policy_value(obs_mb.data, batch.proprio[idx],
                                           train=True)
                log_std = self.log_std.data.astype(np.float64)
                sigma = np.exp(log_std)
                acts = batch.actions[idx].astype(np.float64)
                z = (acts - mu) / sigma
                logp_new = (-0.5 * np.sum(z * z, axis=1) - np.sum(log_std)
                            - 0.5 * a * _LOG_2PI)
                ratio = np.exp(logp_new - batch.log_probs[idx])
                adv = adv_all[idx]
                unclipped = ratio * adv
                clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv
                policy_loss = -float(np.mean(np.minimum(unclipped, clipped)))
                # gradient flows through the ratio only where the min picks
                # the unclipped branch; elsewhere the clamp is saturated
                mask = (unclipped <= clipped).astype(np.float64)
                dlogp = -(adv * mask * ratio) / m
                dmu = dlogp[:, None] * z / sigma
                dlog_std = (dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
                dlog_std -= cfg.entropy_coef
                entropy = float(np.sum(log_std) + 0.5 * a * (1.0 + _LOG_2PI))
                verr = v - batch.returns[idx]
                value_loss = float(np.mean(verr * verr))
                dv = (cfg.value_coef * 2.0 / m) * verr
                self._backward(dmu, dv, dlog_std)
                if cfg.max_grad_norm is not None:
                    clip_grad_norm(self._all_params, cfg.max_grad_norm)
                self.opt.step()
                sums["policy_loss"] += policy_loss
                sums["value_loss"] += value_loss
                sums["entropy"] += entropy
                count += 1
        return {k: s / count for k, s in sums.items()}

    # ---- evaluation and loop ----

    def evaluate(self) -> dict:
        mean_return, success_rate = evaluate_policy(
            self.eval_env, self.rng, self.config.eval_episodes,
            self.config.stack_depth, self.greedy_action_fn(),
        )
        return {
            "step": self.global_step,
            "iteration": self.iteration,
            "mean_return": mean_return,
            "success_rate": success_rate,
            "normalized_return": normalize_return(
                mean_return, self.random_return, self.expert_return
            ),
        }

    def _maybe_eval(self) -> dict | None:
        if self.global_step < self._next_eval:
            return None
        record = self.evaluate()
        self.series.append(record)
        self.best_normalized = max(self.best_normalized, record["normalized_return"])
        while self._next_eval <= self.global_step:
            self._next_eval += self.config.eval_every_steps
        log.info(
            "onpolicy step %d: return %.3f normalized %.3f success %.2f",
            record["step"], record["mean_return"], record["normalized_return"],
            record["success_rate"],
        )
        return record

    def run(self) -> OnPolicyResult:
        cfg = self.config
        start = time.perf_counter()
        stop = False
        while self.global_step < cfg.total_steps and not stop:
            batch = self.collect_segment()
            losses = self.update_on_rollout(batch)
            self.iteration += 1
            self.train_losses.append({"iteration": self.iteration, **losses})
            record = self._maybe_eval()
            if (record is not None
                    and cfg.early_stop_normalized is not None
                    and record["normalized_return"] >= cfg.early_stop_normalized):
                stop = True
        # a final off-schedule measurement stays out of the persistent
        # history, so an interrupted-and-resumed run replays exactly
        series_out = list(self.series)
        if not series_out or series_out[-1]["step"] != self.global_step:
            series_out.append(self.evaluate())
        total_s = time.perf_counter() - start
        final = series_out[-1]["normalized_return"]
        return OnPolicyResult(
            series=series_out,
            train_losses=list(self.train_losses),
            final_normalized=final,
            best_normalized=max(self.best_normalized, final),
            expert_return=self.expert_return,
            random_return=self.random_return,
            env_steps=self.global_step,
            walltime={"total_s": total_s, "iterations": self.iteration},
        )

    # ---- exact resume ----

    def state_dict(self) -> dict:
        return {
            "global_step": self.global_step,
            "iteration": self.iteration,
            "next_eval": self._next_eval,
            "best_normalized": self.best_normalized,
            "series": list(self.series),
            "train_losses": list(self.train_losses),
            "backend": {k: v.copy() for k, v in self.backend.state_arrays()},
            "projection": self.projection.state_dict(),
            "trunk": self.trunk.state_dict(),
            "actor_mlp": self.actor_mlp.state_dict(),
            "critic_mlp": self.critic_mlp.state_dict(),
            "log_std": self.log_std.data.copy(),
            "opt": self.opt.state_dict(),
            "pool": self.pool.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.global_step = int(state["global_step"])
        self.iteration = int(state["iteration"])
        self._next_eval = int(state["next_eval"])
        self.best_normalized = float(state["best_normalized"])
        self.series = list(state["series"])
        self.train_losses = list(state["train_losses"])
        if self.backend.net is not None:
            self.backend.net.load_state_dict(state["backend"])
        self.projection.load_state_dict(state["projection"])
        self.trunk.load_state_dict(state["trunk"])
        self.actor_mlp.load_state_dict(state["actor_mlp"])
        self.critic_mlp.load_state_dict(state["critic_mlp"])
        self.log_std.data[...] = state["log_std"]
        self.opt.load_state_dict(state["opt"])
        self.pool.load_state_dict(state["pool"])


def train_onpolicy(env_factory, config: OnPolicyConfig) -> OnPolicyResult:
    return OnPolicyTrainer(env_factory, config).run()
