"""Off-policy actor-critic training from pixels.

Twin critics regress onto n-step TD targets built with the minimum-target
rule and a soft-updated target critic; the actor follows the
deterministic-policy gradient through clipped exploration noise. Random
shift is applied to current and next observation stacks with independent
draws, and the critic loss is the only path that trains the encoder.

Evaluations run greedy on fixed derived episode seeds and report returns
normalized between a random policy and the scripted expert measured on
those same seeds. Checkpoints snapshot parameters, optimizer moments,
replay contents, and loop counters at episode boundaries, so a resumed
run reproduces the uninterrupted one exactly.
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
from ..encoders.fusion import flare_fuse, fused_dim
from ..encoders.scratch import build_scratch_encoder
from ..envdata.env import Environment
from ..errors import InvalidModeError, InvalidParameterError
from ..imageops import bilinear_resize, to_unit_float
from ..nn import LayerNorm, Linear, ReLU, Sequential, Tanh, make_optimizer, zero_grad
from .evaluation import evaluate_policy, reference_returns
from .replay import ReplayBuffer

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OffPolicyConfig:
    """Hyperparameters for the off-policy trainer.

    Defaults follow the cited pixel-based recipe (discount 0.99, 3-step
    returns, tau 0.01, batch 256, shift pad 4); the desk presets shrink
    the budget-facing knobs, never the algorithm.
    """

    discount: float = 0.99
    n_step: int = 3
    tau: float = 0.01
    batch_size: int = 256
    lr: float = 1e-4
    latent_dim: int = 50
    hidden: tuple = (256, 256)
    stack_depth: int = 3
    shift_pad: int = 4
    noise_start: float = 1.0
    noise_end: float = 0.1
    noise_decay_steps: int = 10_000
    noise_clip: float = 0.3
    update_every: int = 2
    warmup_steps: int = 1_000
    replay_capacity: int = 100_000
    total_steps: int = 50_000
    eval_every_steps: int = 5_000
    eval_episodes: int = 10
    seed: int = 0
    backend: BackendSpec | None = None
    early_stop_normalized: float | None = None

    def __post_init__(self):
        if not 0.0 <= self.discount <= 1.0:
            raise InvalidParameterError(f"discount must lie in [0, 1], got {self.discount}")
        if not 0.0 < self.tau <= 1.0:
            raise InvalidParameterError(f"tau must lie in (0, 1], got {self.tau}")
        if self.n_step < 1:
            raise InvalidParameterError(f"n_step must be >= 1, got {self.n_step}")
        if self.batch_size < 1 or self.latent_dim < 1:
            raise InvalidParameterError("batch_size and latent_dim must be >= 1")
        if self.stack_depth < 1:
            raise InvalidParameterError(f"stack_depth must be >= 1, got {self.stack_depth}")
        if self.shift_pad < 0:
            raise InvalidParameterError(f"shift_pad must be >= 0, got {self.shift_pad}")
        if self.noise_start < 0 or self.noise_end < 0 or self.noise_clip <= 0:
            raise InvalidParameterError("noise scales must be >= 0 and noise_clip > 0")
        if self.noise_decay_steps < 1:
            raise InvalidParameterError("noise_decay_steps must be >= 1")
        if self.update_every < 1 or self.total_steps < 1:
            raise InvalidParameterError("update_every and total_steps must be >= 1")
        if self.warmup_steps < 0:
            raise InvalidParameterError("warmup_steps must be >= 0")
        if self.eval_every_steps < 1 or self.eval_episodes < 1:
            raise InvalidParameterError("eval cadence fields must be >= 1")
        if self.replay_capacity < self.batch_size:
            raise InvalidParameterError(
                f"replay_capacity {self.replay_capacity} cannot hold a batch of "
                f"{self.batch_size}"
            )


@dataclass
class OffPolicyResult:
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
    def from_dict(cls, d: dict) -> "OffPolicyResult":
        return cls(**d)


def _mlp(in_dim: int, hidden: tuple, out_dim: int, rng: np.random.Generator,
         bounded: bool = False) -> Sequential:
    layers = []
    prev = in_dim
    for h in hidden:
        layers.extend([Linear(prev, h, rng), ReLU()])
        prev = h
    layers.append(Linear(prev, out_dim, rng))
    if bounded:
        layers.append(Tanh())
    return Sequential(layers)


class OffPolicyTrainer:
    """Single-owner trainer stepping one environment.

    The paired evaluation environment shares the factory so appearance
    wrappers apply to both.
    """

    def __init__(self, env_factory, config: OffPolicyConfig):
        self.config = config
        self.env: Environment = env_factory()
        self.eval_env: Environment = env_factory()
        self.rng = RNGPolicy(config.seed)

        probe = self.env.reset(self.rng.child_seed("probe"))
        c, h, w = probe.shape
        self.frame_shape = (c, h, w)
        self.action_dim = self.env.action_dim
        t = config.stack_depth

        grng = self.rng.generator("init/backend")
        if config.backend is None:
            self.backend: RepresentationBackend = build_scratch_encoder(
                "offpolicy", (c * t, h, w), grng
            )
        else:
            if config.backend.kind == "scratch":
                self.backend = build_scratch_encoder(
                    config.backend.variant, (c * t, h, w), grng
                )
            else:
                self.backend = build_backend(config.backend, (c, h, w), grng)
                if self.backend.mode != "frozen":
                    raise InvalidModeError(
                        "external backends stay frozen during reinforcement learning"
                    )
        # scratch encoders consume the whole stack as channels; external
        # ones encode per frame and get temporally fused
        self._stacked_input = self.backend.source != "external"
        if self._stacked_input:
            self.feature_dim = self.backend.output_dim
        else:
            self.feature_dim = fused_dim(t, self.backend.output_dim)

        hrng = self.rng.generator("init/heads")
        d, ld, a = self.feature_dim, config.latent_dim, self.action_dim
        self.actor_trunk = Sequential([Linear(d, ld, hrng), LayerNorm(ld), Tanh()])
        self.actor_net = _mlp(ld, config.hidden, a, hrng, bounded=True)
        self.critic_trunk = Sequential([Linear(d, ld, hrng), LayerNorm(ld), Tanh()])
        self.q1 = _mlp(ld + a, config.hidden, 1, hrng)
        self.q2 = _mlp(ld + a, config.hidden, 1, hrng)
        self.t_critic_trunk = Sequential([Linear(d, ld, hrng), LayerNorm(ld), Tanh()])
        self.t_q1 = _mlp(ld + a, config.hidden, 1, hrng)
        self.t_q2 = _mlp(ld + a, config.hidden, 1, hrng)
        self.t_critic_trunk.load_state_dict(self.critic_trunk.state_dict())
        self.t_q1.load_state_dict(self.q1.state_dict())
        self.t_q2.load_state_dict(self.q2.state_dict())

        self._encoder_params = [p for p in self.backend.params() if not p.frozen]
        self._critic_params = (self.critic_trunk.params() + self.q1.params()
                               + self.q2.params())
        self._actor_params = self.actor_trunk.params() + self.actor_net.params()
        self.encoder_opt = (make_optimizer("adam", self._encoder_params, config.lr)
                            if self._encoder_params else None)
        self.critic_opt = make_optimizer("adam", self._critic_params, config.lr)
        self.actor_opt = make_optimizer("adam", self._actor_params, config.lr)

        self.replay = ReplayBuffer(config.replay_capacity, config.n_step,
                                   config.discount, t, self.rng)

        self.global_step = 0
        self.episode_index = 0
        self.update_index = 0
        self._next_eval = config.eval_every_steps
        self.series: list = []
        self.train_losses: list = []
        self.best_normalized = 0.0
        self._update_times: list = []

        self.random_return, self.expert_return = reference_returns(
            self.eval_env, self.rng, config.eval_episodes
        )

    # ---- encoding and acting ----

    def _encode(self, stacks_u8: np.ndarray, train: bool) -> np.ndarray:
        x = to_unit_float(stacks_u8)
        if self._stacked_input:
            return self.backend.forward(x, train=train)
        n = x.shape[0]
        t = self.config.stack_depth
        c = self.frame_shape[0]
        frames = x.reshape(n * t, c, *x.shape[2:])
        if self.backend.input_hw is not None and self.backend.input_hw != x.shape[2:]:
            frames = bilinear_resize(frames, self.backend.input_hw)
        feats = self.backend.forward(frames, train=False)
        return flare_fuse(feats.reshape(n, t, self.backend.output_dim))

    def greedy_action(self, stacked_u8: np.ndarray) -> np.ndarray:
        feats = self._encode(stacked_u8[None], train=False)
        z = self.actor_trunk.forward(feats, train=False)
        return np.asarray(self.actor_net.forward(z, train=False)[0], dtype=np.float32)

    def _noise_std(self, step: int) -> float:
        cfg = self.config
        frac = min(1.0, step / cfg.noise_decay_steps)
        return cfg.noise_start + (cfg.noise_end - cfg.noise_start) * frac

    def _explore_action(self, stacked_u8: np.ndarray, step: int) -> np.ndarray:
        cfg = self.config
        a = self.action_dim
        counters = step * a + np.arange(a)
        if step < cfg.warmup_steps:
            u = self.rng.uniform("explore/warmup", counters)
            return (2.0 * u - 1.0).astype(np.float32)
        mean = self.greedy_action(stacked_u8)
        eps = self.rng.normal("explore/noise", counters)
        act = mean + self._noise_std(step) * eps
        return np.clip(act, -1.0, 1.0).astype(np.float32)

    # ---- evaluation ----

    def evaluate(self) -> dict:
        mean_return, success_rate = evaluate_policy(
            self.eval_env, self.rng, self.config.eval_episodes,
            self.config.stack_depth, lambda stacked, t: self.greedy_action(stacked),
        )
        return {
            "step": self.global_step,
            "episode": self.episode_index,
            "mean_return": mean_return,
            "success_rate": success_rate,
            "normalized_return": normalize_return(
                mean_return, self.random_return, self.expert_return
            ),
        }

    # ---- learning ----

    def _update(self) -> dict:
        cfg = self.config
        batch = self.replay.sample(cfg.batch_size, self.update_index)
        counter_base = self.update_index * cfg.batch_size
        obs_b = ObservationBatch(batch["obs"], stack_depth=cfg.stack_depth)
        nxt_b = ObservationBatch(batch["next_obs"], stack_depth=cfg.stack_depth)
        if cfg.shift_pad > 0:
            obs_b = random_shift(obs_b, cfg.shift_pad, self.rng, counter_base,
                                 stream="rl/shift/obs")
            nxt_b = random_shift(nxt_b, cfg.shift_pad, self.rng, counter_base,
                                 stream="rl/shift/next")
        obs = obs_b.data
        nxt = nxt_b.data

        b, a = cfg.batch_size, self.action_dim
        ld = cfg.latent_dim
        sigma = self._noise_std(self.global_step)
        noise_counters = counter_base * a + np.arange(b * a)

        # targets: online actor proposes, target critics score, min wins
        h_next = self._encode(nxt, train=False)
        za_next = self.actor_trunk.forward(h_next, train=False)
        mean_next = self.actor_net.forward(za_next, train=False)
        eps = self.rng.normal("rl/target_noise", noise_counters).reshape(b, a)
        noise = np.clip(sigma * eps, -cfg.noise_clip, cfg.noise_clip)
        a_next = np.clip(mean_next + noise, -1.0, 1.0).astype(np.float32)
        z_next = self.t_critic_trunk.forward(h_next, train=False)
        qin_next = np.concatenate([z_next, a_next], axis=1)
        q1t = self.t_q1.forward(qin_next, train=False)[:, 0]
        q2t = self.t_q2.forward(qin_next, train=False)[:, 0]
        y = batch["rewards"] + batch["discounts"] * np.minimum(q1t, q2t)

        # critic phase: the only gradients the encoder ever sees
        zero_grad(self._critic_params)
        zero_grad(self._encoder_params)
        h = self._encode(obs, train=True)
        z = self.critic_trunk.forward(h, train=True)
        qin = np.concatenate([z, batch["actions"]], axis=1)
        q1 = self.q1.forward(qin, train=True)[:, 0]
        q2 = self.q2.forward(qin, train=True)[:, 0]
        d1 = q1 - y
        d2 = q2 - y
        critic_loss = float(np.mean(d1 * d1 + d2 * d2))
        g1 = ((2.0 / b) * d1)[:, None].astype(np.float32)
        g2 = ((2.0 / b) * d2)[:, None].astype(np.float32)
        din = self.q1.backward(g1) + self.q2.backward(g2)
        dh = self.critic_trunk.backward(din[:, :ld])
        if self._encoder_params:
            self.backend.backward(dh.astype(np.float32))
            self.encoder_opt.step()
        self.critic_opt.step()

        # actor phase on detached features; critic gradients accumulated
        # here are strays, zeroed at the top of the next critic phase
        zero_grad(self._actor_params)
        za = self.actor_trunk.forward(h, train=True)
        mu = self.actor_net.forward(za, train=True)
        eps_a = self.rng.normal("rl/actor_noise", noise_counters).reshape(b, a)
        noise_a = np.clip(sigma * eps_a, -cfg.noise_clip, cfg.noise_clip)
        a_pi = np.clip(mu + noise_a, -1.0, 1.0).astype(np.float32)
        z_d = self.critic_trunk.forward(h, train=False)
        qin_a = np.concatenate([z_d, a_pi], axis=1)
        q1a = self.q1.forward(qin_a, train=False)[:, 0]
        q2a = self.q2.forward(qin_a, train=False)[:, 0]
        actor_loss = -float(np.mean(np.minimum(q1a, q2a)))
        pick1 = q1a <= q2a
        gq1 = np.where(pick1, -1.0 / b, 0.0)[:, None].astype(np.float32)
        gq2 = np.where(~pick1, -1.0 / b, 0.0)[:, None].astype(np.float32)
        da = self.q1.backward(gq1)[:, ld:] + self.q2.backward(gq2)[:, ld:]
        da = da * (np.abs(a_pi) < 1.0)
        dza = self.actor_net.backward(da.astype(np.float32))
        self.actor_trunk.backward(dza)
        self.actor_opt.step()

        self._soft_update()
        self.update_index += 1
        return {"critic_loss": critic_loss, "actor_loss": actor_loss}

    def _target_pairs(self):
        return zip(
            self.t_critic_trunk.params() + self.t_q1.params() + self.t_q2.params(),
            self._critic_params,
        )

    def _soft_update(self) -> None:
        tau = self.config.tau
        if tau == 1.0:
            for dst, src in self._target_pairs():
                dst.data[...] = src.data
            return
        for dst, src in self._target_pairs():
            dst.data *= 1.0 - tau
            dst.data += tau * src.data

    # ---- training loop ----

    def _maybe_eval(self) -> dict | None:
        if self.global_step < self._next_eval:
            return None
        record = self.evaluate()
        self.series.append(record)
        self.best_normalized = max(self.best_normalized, record["normalized_return"])
        while self._next_eval <= self.global_step:
            self._next_eval += self.config.eval_every_steps
        log.info(
            "offpolicy step %d: return %.3f normalized %.3f success %.2f",
            record["step"], record["mean_return"], record["normalized_return"],
            record["success_rate"],
        )
        return record

    def run(self) -> OffPolicyResult:
        cfg = self.config
        start = time.perf_counter()
        stop = False
        while self.global_step < cfg.total_steps and not stop:
            ep_seed = self.rng.child_seed("train/episode", self.episode_index)
            obs = self.env.reset(ep_seed)
            stack = [obs] * cfg.stack_depth
            frames = [obs]
            acts: list = []
            rews: list = []
            done = False
            info: dict = {}
            while not done:
                act = self._explore_action(np.concatenate(stack, axis=0),
                                           self.global_step)
                obs, r, done, info = self.env.step(act)
                stack = stack[1:] + [obs]
                frames.append(obs)
                acts.append(act)
                rews.append(np.float32(r))
                self.global_step += 1
                if (self.global_step >= cfg.warmup_steps
                        and self.global_step % cfg.update_every == 0
                        and len(self.replay) >= cfg.batch_size):
                    t0 = time.perf_counter()
                    losses = self._update()
                    self._update_times.append(time.perf_counter() - t0)
                    if self.update_index % 50 == 1 or self.update_index == 1:
                        self.train_losses.append(
                            {"update": self.update_index, **losses}
                        )
            self.replay.add_episode(
                np.stack(frames), np.stack(acts),
                np.asarray(rews, dtype=np.float32),
                terminal=bool(info.get("success", False)),
            )
            self.episode_index += 1
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
        return OffPolicyResult(
            series=series_out,
            train_losses=list(self.train_losses),
            final_normalized=final,
            best_normalized=max(self.best_normalized, final),
            expert_return=self.expert_return,
            random_return=self.random_return,
            env_steps=self.global_step,
            walltime={
                "total_s": total_s,
                "updates": self.update_index,
                "update_s_median": float(np.median(self._update_times))
                if self._update_times else 0.0,
            },
        )

    # ---- exact resume ----

    def state_dict(self) -> dict:
        return {
            "global_step": self.global_step,
            "episode_index": self.episode_index,
            "update_index": self.update_index,
            "next_eval": self._next_eval,
            "best_normalized": self.best_normalized,
            "series": list(self.series),
            "train_losses": list(self.train_losses),
            "backend": {k: v.copy() for k, v in self.backend.state_arrays()},
            "actor_trunk": self.actor_trunk.state_dict(),
            "actor_net": self.actor_net.state_dict(),
            "critic_trunk": self.critic_trunk.state_dict(),
            "q1": self.q1.state_dict(),
            "q2": self.q2.state_dict(),
            "t_critic_trunk": self.t_critic_trunk.state_dict(),
            "t_q1": self.t_q1.state_dict(),
            "t_q2": self.t_q2.state_dict(),
            "encoder_opt": None if self.encoder_opt is None
            else self.encoder_opt.state_dict(),
            "critic_opt": self.critic_opt.state_dict(),
            "actor_opt": self.actor_opt.state_dict(),
            "replay": self.replay.state_dict(),
        }

    def load_state_dict(self, state: dict) -> None:
        self.global_step = int(state["global_step"])
        self.episode_index = int(state["episode_index"])
        self.update_index = int(state["update_index"])
        self._next_eval = int(state["next_eval"])
        self.best_normalized = float(state["best_normalized"])
        self.series = list(state["series"])
        self.train_losses = list(state["train_losses"])
        if self.backend.net is not None:
            self.backend.net.load_state_dict(state["backend"])
        for name in ("actor_trunk", "actor_net", "critic_trunk", "q1", "q2",
                     "t_critic_trunk", "t_q1", "t_q2"):
            getattr(self, name).load_state_dict(state[name])
        if self.encoder_opt is not None and state["encoder_opt"] is not None:
            self.encoder_opt.load_state_dict(state["encoder_opt"])
        self.critic_opt.load_state_dict(state["critic_opt"])
        self.actor_opt.load_state_dict(state["actor_opt"])
        self.replay.load_state_dict(state["replay"])


def train_offpolicy(env_factory, config: OffPolicyConfig) -> OffPolicyResult:
    return OffPolicyTrainer(env_factory, config).run()
