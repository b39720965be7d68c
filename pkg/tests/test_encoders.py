"""Encoder shape contracts, fusion arithmetic, backends, and feature caching."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmcbench.core.rng import RNGPolicy
from vmcbench.core.types import ObservationBatch
from vmcbench.encoders.backend import (
    BackendSpec,
    backend_forward,
    build_backend,
    load_backend_file,
    make_identity_backend,
    make_mock_pretrained,
    save_backend,
    set_mode,
)
from vmcbench.encoders.cache import build_feature_cache, dataset_digest
from vmcbench.encoders.fusion import flare_backward, flare_fuse, fused_dim
from vmcbench.encoders.scratch import (
    ScratchEncoderSpec,
    build_scratch_net,
    conv_chain_hw,
    encoder_output_dim,
    scratch_encoder_spec,
)
from vmcbench.envdata.env import SyntheticReachEnv
from vmcbench.envdata.expert import generate_demos
from vmcbench.errors import ConfigurationError, InvalidModeError, ShapeError


def small_dataset(resolution=16, count=3, seed=5):
    env = SyntheticReachEnv(resolution=resolution, horizon=20)
    return generate_demos(env, count, seed)


# --- shape arithmetic ---------------------------------------------------


def test_native_resolution_dims():
    # hand-derived from the layer recipes
    assert encoder_output_dim("bc", (3, 256, 256)) == 2048
    assert encoder_output_dim("onpolicy", (3, 224, 224)) == 128
    assert encoder_output_dim("offpolicy", (9, 84, 84)) == 39200


def test_conv_chain_matches_manual_arithmetic():
    # bc blocks are (3, 2, 1): h -> ceil(h / 2) five times
    h = 100
    for _ in range(5):
        h = (h + 2 - 3) // 2 + 1
    assert conv_chain_hw("bc", 100, 100) == (h, h)


def test_forward_shapes_at_buildable_resolutions(gen):
    cases = {"bc": 32, "onpolicy": 135, "offpolicy": 32}
    for variant, res in cases.items():
        shape = (3, res, res)
        net = build_scratch_net(variant, shape, gen)
        x = gen.random((2, *shape)).astype(np.float32)
        out = net.forward(x, train=False)
        assert out.shape == (2, encoder_output_dim(variant, shape))


def test_chain_underrun_raises():
    with pytest.raises(ShapeError):
        conv_chain_hw("onpolicy", 64, 64)
    with pytest.raises(ShapeError):
        conv_chain_hw("offpolicy", 14, 14)
    with pytest.raises(ShapeError):
        build_scratch_net("onpolicy", (3, 64, 64), np.random.default_rng(0))


def test_spec_validation():
    with pytest.raises(ConfigurationError):
        conv_chain_hw("vit", 32, 32)
    with pytest.raises(ShapeError):
        ScratchEncoderSpec("bc", (3, 32, 32), 999)
    spec = scratch_encoder_spec("offpolicy", (3, 32, 32))
    assert spec.output_dim == encoder_output_dim("offpolicy", (3, 32, 32))


# --- flare fusion -------------------------------------------------------


def test_flare_fuse_matches_loop_oracle(gen):
    n, t, d = 4, 3, 5
    z = gen.standard_normal((n, t, d))
    fused = flare_fuse(z)
    assert fused.shape == (n, fused_dim(t, d))
    for i in range(n):
        parts = [z[i, j] for j in range(t)] + [z[i, j + 1] - z[i, j] for j in range(t - 1)]
        np.testing.assert_array_equal(fused[i], np.concatenate(parts))


def test_flare_fuse_single_frame_identity(gen):
    z = gen.standard_normal((6, 1, 7))
    np.testing.assert_array_equal(flare_fuse(z), z[:, 0])


def test_flare_backward_is_adjoint(gen):
    n, t, d = 5, 4, 6
    z = gen.standard_normal((n, t, d))
    c = gen.standard_normal((n, fused_dim(t, d)))
    lhs = np.vdot(flare_fuse(z), c)
    rhs = np.vdot(z, flare_backward(c, t, d))
    assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), 1.0)


def test_flare_shape_errors(gen):
    with pytest.raises(ShapeError):
        flare_fuse(gen.standard_normal((4, 5)))
    with pytest.raises(ShapeError):
        flare_backward(gen.standard_normal((4, 9)), 3, 5)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 5), t=st.integers(1, 4), d=st.integers(1, 8))
def test_flare_adjoint_property(n, t, d):
    gen = np.random.default_rng(n * 100 + t * 10 + d)
    z = gen.standard_normal((n, t, d))
    c = gen.standard_normal((n, fused_dim(t, d)))
    assert flare_fuse(z).shape == (n, fused_dim(t, d))
    lhs = np.vdot(flare_fuse(z), c)
    rhs = np.vdot(z, flare_backward(c, t, d))
    assert abs(lhs - rhs) <= 1e-9 * max(abs(lhs), 1.0)


# --- backends -----------------------------------------------------------


def test_mock_backend_deterministic_across_builds():
    a = make_mock_pretrained(native_resolution=36, feature_dim=32, channels=4)
    b = make_mock_pretrained(native_resolution=36, feature_dim=32, channels=4)
    assert a.fingerprint() == b.fingerprint()
    x = np.random.default_rng(3).random((2, 3, 36, 36)).astype(np.float32)
    np.testing.assert_array_equal(a.forward(x), b.forward(x))


def test_mock_backend_mode_controls_frozen_flags():
    backend = make_mock_pretrained(native_resolution=36, feature_dim=16, channels=4)
    assert backend.mode == "frozen"
    assert all(p.frozen for p in backend.params())
    set_mode(backend, "finetune")
    assert all(not p.frozen for p in backend.params())


def test_backend_file_roundtrip(tmp_path, gen):
    backend = make_mock_pretrained(native_resolution=36, feature_dim=16, channels=4)
    path = str(tmp_path / "weights.npz")
    save_backend(backend, path)
    loaded = load_backend_file(path)
    assert loaded.fingerprint() == backend.fingerprint()
    x = gen.random((2, 3, 36, 36)).astype(np.float32)
    np.testing.assert_array_equal(backend.forward(x), loaded.forward(x))


def test_identity_backend_flattens(gen):
    backend = make_identity_backend((3, 8, 8))
    assert backend.output_dim == 192
    x = gen.random((4, 3, 8, 8)).astype(np.float32)
    np.testing.assert_array_equal(backend.forward(x), x.reshape(4, -1))


def test_backend_spec_validation():
    with pytest.raises(ConfigurationError):
        BackendSpec(kind="scratch", mode="frozen")
    with pytest.raises(ConfigurationError):
        BackendSpec(kind="mock", mode="trainable")
    with pytest.raises(ConfigurationError):
        BackendSpec(kind="file", mode="frozen")
    with pytest.raises(ConfigurationError):
        BackendSpec(kind="resnet")
    with pytest.raises(InvalidModeError):
        BackendSpec(mode="inference")


def test_build_backend_dispatch(gen):
    scratch = build_backend(BackendSpec(kind="scratch", variant="offpolicy"), (3, 32, 32), gen)
    assert scratch.mode == "trainable"
    assert scratch.output_dim == encoder_output_dim("offpolicy", (3, 32, 32))
    mock = build_backend(
        BackendSpec(kind="mock", mode="finetune", native_resolution=36,
                    feature_dim=16, channels=4),
        (3, 24, 24), gen)
    assert mock.mode == "finetune"
    assert mock.output_dim == 16


def test_backend_forward_fuses_stacked_frames(gen):
    backend = make_identity_backend((3, 6, 6))
    frames = gen.integers(0, 256, size=(4, 9, 6, 6), dtype=np.uint8)
    batch = ObservationBatch(frames, stack_depth=3)
    per_frame = (frames.reshape(4, 3, 3, 6, 6).astype(np.float32) / 255.0).reshape(4, 3, -1)
    fused = backend_forward(backend, batch, fuse=True)
    np.testing.assert_allclose(fused, flare_fuse(per_frame), atol=1e-7)
    flat = backend_forward(backend, batch, fuse=False)
    np.testing.assert_allclose(flat, per_frame.reshape(4, -1), atol=1e-7)


def test_backend_forward_resizes_for_external(gen):
    backend = make_mock_pretrained(native_resolution=36, feature_dim=16, channels=4)
    frames = gen.integers(0, 256, size=(2, 3, 24, 24), dtype=np.uint8)
    out = backend_forward(backend, ObservationBatch(frames))
    assert out.shape == (2, 16)
    assert np.isfinite(out).all()


# --- feature cache ------------------------------------------------------


def test_cache_requires_frozen_backend():
    backend = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4)
    set_mode(backend, "finetune")
    with pytest.raises(InvalidModeError):
        build_feature_cache(backend, small_dataset())


def test_cache_rows_equal_direct_forward_bitwise():
    backend = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4)
    dataset = small_dataset()
    total = sum(ep.length for ep in dataset.episodes)
    # one chunk on both paths so BLAS sees the same decomposition
    cache = build_feature_cache(backend, dataset, frame_batch=total)
    frames = np.concatenate([ep.observations for ep in dataset.episodes])
    direct = backend_forward(backend, ObservationBatch(frames))
    assert cache.features.shape == (total, 8)
    assert np.max(np.abs(cache.features - direct)) == 0.0


def test_cache_row_addressing_matches_offsets():
    backend = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4)
    dataset = small_dataset()
    cache = build_feature_cache(backend, dataset)
    lengths = [ep.length for ep in dataset.episodes]
    assert cache.row(0, 0) == 0
    assert cache.row(1, 0) == lengths[0]
    assert cache.row(2, 3) == lengths[0] + lengths[1] + 3
    eps = np.array([0, 2, 1])
    ts = np.array([1, 0, 2])
    expected = np.array([1, lengths[0] + lengths[1], lengths[0] + 2])
    np.testing.assert_array_equal(cache.rows(eps, ts), expected)


def test_cache_matches_keys_on_backend_and_data():
    backend = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4)
    dataset = small_dataset(seed=5)
    other = small_dataset(seed=6)
    cache = build_feature_cache(backend, dataset)
    assert cache.matches(backend, dataset)
    assert not cache.matches(backend, other)
    shifted = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4,
                                   weight_seed=77)
    assert not cache.matches(shifted, dataset)
    assert dataset_digest(dataset) != dataset_digest(other)


def test_cache_persists_through_cache_dir(cache_dir):
    backend = make_mock_pretrained(native_resolution=36, feature_dim=8, channels=4)
    dataset = small_dataset()
    first = build_feature_cache(backend, dataset, frame_batch=32)
    files = list(cache_dir.glob("features_*.npz"))
    assert len(files) == 1
    second = build_feature_cache(backend, dataset, frame_batch=32)
    np.testing.assert_array_equal(first.features, second.features)
    # a different frame batch is a different cache key
    build_feature_cache(backend, dataset, frame_batch=16)
    assert len(list(cache_dir.glob("features_*.npz"))) == 2
