"""Behavior-cloning trainer: learning, determinism, caching, finetune paths."""

from dataclasses import replace

import numpy as np
import pytest

from vmcbench.augment import AugmentationSpec
from vmcbench.core.metrics import top_k_mean
from vmcbench.core.rng import RNGPolicy
from vmcbench.encoders import BackendSpec
from vmcbench.envdata.env import SyntheticReachEnv
from vmcbench.envdata.expert import generate_demos
from vmcbench.errors import ConfigurationError, InsufficientDataError, InvalidModeError
from vmcbench.imitation.bc import (
    BCConfig,
    BCResult,
    BCTrainer,
    data_efficiency_sweep,
    finetune_pretrained,
    load_policy,
    save_policy,
    train_bc,
)

RES = 16

IDENTITY = BackendSpec(kind="identity")
MOCK_FROZEN = BackendSpec(kind="mock", mode="frozen", native_resolution=36,
                          feature_dim=16, channels=4)
MOCK_FINETUNE = BackendSpec(kind="mock", mode="finetune", native_resolution=36,
                            feature_dim=16, channels=4)


def tiny_env():
    return SyntheticReachEnv(resolution=RES, horizon=15)


@pytest.fixture(scope="module")
def demos():
    return generate_demos(tiny_env(), 4, seed=17)


def tiny_config(**kwargs):
    defaults = dict(
        backend=IDENTITY,
        epochs=2,
        eval_every=2,
        eval_episodes=2,
        batch_size=32,
        learning_rate=1e-3,
        stack_depth=1,
        head_hidden=(32,),
        seed=3,
    )
    defaults.update(kwargs)
    return BCConfig(**defaults)


def backend_arrays(trainer):
    return {n: a.copy() for n, a in trainer.backend.state_arrays()}


# --- config validation --------------------------------------------------


def test_config_validation():
    with pytest.raises(ConfigurationError):
        tiny_config(epochs=1, eval_every=2)
    with pytest.raises(ConfigurationError):
        tiny_config(batch_size=0)
    with pytest.raises(ConfigurationError):
        tiny_config(learning_rate=-1e-3)
    with pytest.raises(ConfigurationError):
        tiny_config(eval_episodes=0)
    with pytest.raises(ConfigurationError):
        tiny_config(stack_depth=0)


def test_trainer_rejects_oversubscribed_demo_count(demos):
    with pytest.raises(InsufficientDataError):
        BCTrainer(tiny_config(demo_count=99), demos, tiny_env())


# --- learning and determinism -------------------------------------------


def test_loss_decreases_under_training(demos):
    cfg = tiny_config(epochs=25, eval_every=25, eval_episodes=1, learning_rate=3e-3)
    trainer = BCTrainer(cfg, demos, tiny_env())
    losses = [trainer.run_epoch(e) for e in range(25)]
    assert losses[-1] < 0.5 * losses[0]


def test_training_is_seed_deterministic(demos):
    a = train_bc(tiny_config(), demos, tiny_env())
    b = train_bc(tiny_config(), demos, tiny_env())
    assert a.train_losses == b.train_losses
    assert a.series.scores == b.series.scores
    c = train_bc(tiny_config(seed=4), demos, tiny_env())
    assert a.train_losses != c.train_losses


def test_evaluation_never_mutates_training_state(demos):
    trainer = BCTrainer(tiny_config(), demos, tiny_env())
    trainer.run_epoch(0)
    before_backend = backend_arrays(trainer)
    before_head = {n: a.copy() for n, a in trainer.head.net.state_arrays()}
    trainer.evaluate()
    for n, a in trainer.backend.state_arrays():
        np.testing.assert_array_equal(a, before_backend[n])
    for n, a in trainer.head.net.state_arrays():
        np.testing.assert_array_equal(a, before_head[n])


def test_series_cadence_and_top3(demos):
    cfg = tiny_config(epochs=6, eval_every=2)
    result = train_bc(cfg, demos, tiny_env())
    assert result.series.steps == (2, 4, 6)
    scores = np.array(result.series.scores)
    assert result.top3_score == top_k_mean(scores, 3)
    assert result.final_score == result.series.scores[-1]
    assert len(result.train_losses) == 6
    assert set(result.walltime) == {"train_s_per_epoch", "train_s_per_update",
                                    "eval_s_per_episode"}


def test_early_stop_cuts_series(demos):
    cfg = tiny_config(epochs=10, eval_every=1, early_stop_top3=0.0)
    result = train_bc(cfg, demos, tiny_env())
    assert len(result.series) == 3  # stops at the first top-3 window


def test_result_dict_roundtrip(demos):
    result = train_bc(tiny_config(), demos, tiny_env())
    again = BCResult.from_dict(result.to_dict())
    assert again.series.steps == result.series.steps
    assert again.series.scores == result.series.scores
    assert again.top3_score == result.top3_score
    assert again.train_losses == result.train_losses


# --- freezing and caching -----------------------------------------------


def test_frozen_backend_never_changes(demos):
    trainer = BCTrainer(tiny_config(backend=MOCK_FROZEN, use_cache=False),
                        demos, tiny_env())
    before = backend_arrays(trainer)
    head_before = {n: a.copy() for n, a in trainer.head.net.state_arrays()}
    for epoch in range(2):
        trainer.run_epoch(epoch)
    for n, a in trainer.backend.state_arrays():
        np.testing.assert_array_equal(a, before[n])
    assert any(not np.array_equal(a, head_before[n])
               for n, a in trainer.head.net.state_arrays())
    grads = [float(np.abs(p.grad).max()) for p in trainer.backend.params()]
    assert max(grads) == 0.0


def test_cache_flag_requires_frozen_and_no_aug(demos):
    cached = BCTrainer(tiny_config(backend=MOCK_FROZEN), demos, tiny_env())
    assert cached.cached and cached.cache is not None
    pixel = BCTrainer(tiny_config(backend=MOCK_FROZEN, use_cache=False),
                      demos, tiny_env())
    assert not pixel.cached and pixel.cache is None
    augmented = BCTrainer(
        tiny_config(backend=MOCK_FROZEN,
                    augmentation=AugmentationSpec("shift", pad=2)),
        demos, tiny_env())
    assert not augmented.cached and augmented.cache is None
    scratch = BCTrainer(tiny_config(), demos, tiny_env())
    assert not scratch.cached


def test_cached_and_pixel_paths_agree(demos):
    # same sample order on both paths; features differ only by BLAS
    # decomposition, so losses agree to float32 noise
    cached = BCTrainer(tiny_config(backend=MOCK_FROZEN), demos, tiny_env())
    pixel = BCTrainer(tiny_config(backend=MOCK_FROZEN, use_cache=False),
                      demos, tiny_env())
    for epoch in range(2):
        lc = cached.run_epoch(epoch)
        lp = pixel.run_epoch(epoch)
        assert lc == pytest.approx(lp, rel=1e-3, abs=1e-5)


# --- subsampling --------------------------------------------------------


def test_demo_subsets_nest(demos):
    small = BCTrainer(tiny_config(demo_count=2), demos, tiny_env())
    large = BCTrainer(tiny_config(demo_count=4), demos, tiny_env())
    assert small.episode_ids == large.episode_ids[:2]
    assert small.num_samples == sum(
        demos.episodes[i].length for i in small.episode_ids)


def test_sweep_validation_and_keys(demos):
    with pytest.raises(ConfigurationError):
        data_efficiency_sweep(tiny_config(), demos, tiny_env(), counts=())
    with pytest.raises(InsufficientDataError):
        data_efficiency_sweep(tiny_config(), demos, tiny_env(), counts=(99,))
    with pytest.raises(ConfigurationError):
        data_efficiency_sweep(tiny_config(), demos, tiny_env(), counts=(0, 2))
    results = data_efficiency_sweep(tiny_config(), demos, tiny_env(), counts=(1, 2))
    assert set(results) == {1, 2}
    assert all(isinstance(r, BCResult) for r in results.values())


# --- finetuning ---------------------------------------------------------


def test_finetune_guards(demos):
    with pytest.raises(InvalidModeError):
        finetune_pretrained(tiny_config(), demos, tiny_env())
    with pytest.raises(InvalidModeError):
        finetune_pretrained(tiny_config(backend=MOCK_FROZEN), demos, tiny_env())


def test_finetune_updates_backbone(demos):
    trainer = BCTrainer(tiny_config(backend=MOCK_FINETUNE), demos, tiny_env())
    before = backend_arrays(trainer)
    trainer.run_epoch(0)
    changed = [not np.array_equal(a, before[n])
               for n, a in trainer.backend.state_arrays()]
    assert any(changed)


def test_zero_backbone_lr_matches_frozen(demos):
    frozen = BCTrainer(tiny_config(backend=MOCK_FROZEN, use_cache=False),
                       demos, tiny_env())
    pinned = BCTrainer(tiny_config(backend=MOCK_FINETUNE, backbone_lr=0.0),
                       demos, tiny_env())
    before = backend_arrays(pinned)
    for epoch in range(2):
        lf = frozen.run_epoch(epoch)
        lp = pinned.run_epoch(epoch)
        assert lf == lp
    for n, a in pinned.backend.state_arrays():
        np.testing.assert_array_equal(a, before[n])


# --- policy snapshot ----------------------------------------------------


def test_policy_roundtrip_identity_and_external(tmp_path, demos):
    for name, cfg in (("identity", tiny_config()),
                      ("mock", tiny_config(backend=MOCK_FROZEN, use_cache=False))):
        trainer = BCTrainer(cfg, demos, tiny_env())
        trainer.run_epoch(0)
        policy = trainer.policy()
        path = str(tmp_path / f"{name}.npz")
        save_policy(policy, path)
        loaded = load_policy(path)
        stack = demos.episodes[0].observations[0]
        np.testing.assert_array_equal(policy.act(stack), loaded.act(stack))


def test_policy_evaluate_deterministic(demos):
    trainer = BCTrainer(tiny_config(), demos, tiny_env())
    trainer.run_epoch(0)
    policy = trainer.policy()
    a = policy.evaluate(tiny_env(), 3, RNGPolicy(5))
    b = policy.evaluate(tiny_env(), 3, RNGPolicy(5))
    assert a == b
    c = policy.evaluate(tiny_env(), 3, RNGPolicy(6))
    assert a[1] != c[1]
