"""Augmentation oracles: pad-and-crop enumeration, per-pixel jitter math,
overlay endpoints, and stack consistency."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vmcbench.augment import (
    AugmentationSpec,
    DistractorSource,
    JitterParams,
    apply_stack_consistent,
    color_jitter,
    random_overlay,
    random_shift,
)
from vmcbench.core.rng import RNGPolicy
from vmcbench.core.types import UINT8, ObservationBatch
from vmcbench.errors import InvalidParameterError, ShapeError


def _batch(gen, n=4, c=3, h=12, w=12, stack=1):
    data = gen.integers(0, 256, (n, stack * c, h, w), dtype=np.uint8)
    return ObservationBatch(data, stack_depth=stack, value_domain=UINT8)


def _shift_oracle(img: np.ndarray, dx: int, dy: int, pad: int) -> np.ndarray:
    """Brute-force replicate-pad then crop at offset (dx, dy) in [0, 2p]."""
    padded = np.pad(img, ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    h, w = img.shape[1:]
    return padded[:, dy:dy + h, dx:dx + w]


def test_shift_matches_oracle_on_all_offsets(gen):
    pad = 2
    img = gen.integers(0, 256, (1, 4, 16, 16), dtype=np.uint8)
    batch = ObservationBatch(img, stack_depth=1, value_domain=UINT8)
    for dy in range(2 * pad + 1):
        for dx in range(2 * pad + 1):
            forced = np.array([[dx - pad, dy - pad]])
            out = random_shift(batch, pad, offsets=forced)
            expect = _shift_oracle(img[0], dx, dy, pad)
            np.testing.assert_array_equal(out.data[0], expect)


def test_shift_draws_are_deterministic(gen):
    batch = _batch(gen)
    rng = RNGPolicy(5)
    a = random_shift(batch, 3, rng=rng, counter_base=70)
    b = random_shift(batch, 3, rng=RNGPolicy(5), counter_base=70)
    np.testing.assert_array_equal(a.data, b.data)
    c = random_shift(batch, 3, rng=rng, counter_base=71)
    assert not np.array_equal(a.data, c.data)


def test_shift_applies_one_offset_per_stacked_sample(gen):
    # a stack of identical frames stays identical after shifting
    frame = gen.integers(0, 256, (1, 3, 10, 10), dtype=np.uint8)
    stacked = np.concatenate([frame, frame, frame], axis=1)
    batch = ObservationBatch(stacked, stack_depth=3, value_domain=UINT8)
    out = random_shift(batch, 2, rng=RNGPolicy(0))
    a, b, c = np.split(out.data[0], 3, axis=0)
    np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(b, c)


def test_shift_validation():
    batch = ObservationBatch(np.zeros((2, 3, 8, 8), np.uint8), stack_depth=1,
                             value_domain=UINT8)
    with pytest.raises(InvalidParameterError):
        random_shift(batch, 4, rng=RNGPolicy(0))  # pad >= H/2
    with pytest.raises(ShapeError):
        random_shift(batch, 2, offsets=np.zeros((3, 2)))
    with pytest.raises(InvalidParameterError):
        random_shift(batch, 2, offsets=np.full((2, 2), 3))


def _jitter_pixel_oracle(frames_u01, factors):
    """Scalar-loop restatement of the jitter pipeline, one pixel at a time."""
    m, _, h, w = frames_u01.shape
    out = np.empty_like(frames_u01)
    gray_w = np.array([0.299, 0.587, 0.114])
    for i in range(m):
        bf, cf, sf, hf = factors[i]
        x = np.clip(frames_u01[i] * bf, 0, 1)
        mean = (gray_w @ x.reshape(3, -1)).mean()
        x = np.clip(mean + cf * (x - mean), 0, 1)
        gray = np.einsum("c,chw->hw", gray_w, x)
        x = np.clip(gray[None] + sf * (x - gray[None]), 0, 1)
        import colorsys

        for r in range(h):
            for col in range(w):
                hh, ss, vv = colorsys.rgb_to_hsv(*x[:, r, col])
                rr, gg, bb = colorsys.hsv_to_rgb((hh + hf) % 1.0, ss, vv)
                out[i, :, r, col] = (rr, gg, bb)
    return np.clip(out, 0, 1)


def test_jitter_matches_per_pixel_oracle(gen):
    frames = gen.random((3, 3, 6, 6))
    factors = np.column_stack([
        gen.uniform(0.6, 1.4, 3), gen.uniform(0.6, 1.4, 3),
        gen.uniform(0.6, 1.4, 3), gen.uniform(-0.5, 0.5, 3),
    ])
    batch = ObservationBatch(frames.astype(np.float32), stack_depth=1,
                             value_domain="unit_float")
    out = color_jitter(batch, JitterParams(), factors=factors)
    expect = _jitter_pixel_oracle(frames, factors)
    np.testing.assert_allclose(out.data, expect, atol=1e-6)


def test_jitter_identity_params_skip_work(gen):
    batch = _batch(gen)
    out = color_jitter(batch, JitterParams(0, 0, 0, 0), rng=RNGPolicy(0))
    np.testing.assert_array_equal(out.data, batch.data)


def test_jitter_shares_factors_across_stack(gen):
    frame = gen.integers(0, 256, (1, 3, 8, 8), dtype=np.uint8)
    stacked = np.concatenate([frame, frame], axis=1)
    batch = ObservationBatch(stacked, stack_depth=2, value_domain=UINT8)
    out = color_jitter(batch, JitterParams(), rng=RNGPolicy(3))
    a, b = np.split(out.data[0], 2, axis=0)
    np.testing.assert_array_equal(a, b)


def test_jitter_requires_rgb(gen):
    batch = ObservationBatch(gen.integers(0, 256, (2, 4, 8, 8), dtype=np.uint8),
                             stack_depth=1, value_domain=UINT8)
    with pytest.raises(ShapeError):
        color_jitter(batch, JitterParams(), rng=RNGPolicy(0))


def test_overlay_endpoints_exact(gen):
    batch = _batch(gen, n=3)
    source = DistractorSource.from_noise(5, (12, 12), seed=1)
    idx = np.array([0, 2, 4])

    out0 = random_overlay(batch, source, alpha=0.0, indices=idx)
    np.testing.assert_array_equal(out0.data, batch.data)

    out1 = random_overlay(batch, source, alpha=1.0, indices=idx)
    np.testing.assert_array_equal(out1.data, source.images[idx])

    half = random_overlay(batch, source, alpha=0.5, indices=idx)
    expect = np.rint(0.5 * batch.data.astype(np.float64)
                     + 0.5 * source.images[idx].astype(np.float64)).astype(np.uint8)
    np.testing.assert_array_equal(half.data, expect)


def test_overlay_resolution_mismatch_rejected(gen):
    batch = _batch(gen)
    source = DistractorSource.from_noise(2, (10, 10), seed=1)
    with pytest.raises(ShapeError):
        random_overlay(batch, source, alpha=0.5, rng=RNGPolicy(0))


def test_composite_applies_children_in_order(gen):
    batch = _batch(gen, n=2, h=14, w=14)
    rng = RNGPolicy(9)
    spec = AugmentationSpec(kind="composite", children=(
        AugmentationSpec(kind="shift", pad=2),
        AugmentationSpec(kind="jitter"),
    ))
    out = apply_stack_consistent(spec, batch, rng, counter_base=11)
    # children draw from per-position streams under the spec's root
    manual = random_shift(batch, 2, rng=RNGPolicy(9), counter_base=11,
                          stream="aug/0/shift")
    manual = color_jitter(manual, JitterParams(), rng=RNGPolicy(9),
                          counter_base=11, stream="aug/1/jitter")
    np.testing.assert_array_equal(out.data, manual.data)


def test_none_spec_is_identity(gen):
    batch = _batch(gen)
    out = apply_stack_consistent(AugmentationSpec(kind="none"), batch, RNGPolicy(0))
    np.testing.assert_array_equal(out.data, batch.data)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    pad=st.integers(1, 3),
    counter=st.integers(0, 10**6),
)
def test_shift_output_rows_exist_in_padded_input(seed, pad, counter):
    gen = np.random.default_rng(seed)
    img = gen.integers(0, 256, (1, 2, 9, 9), dtype=np.uint8)
    batch = ObservationBatch(img, stack_depth=1, value_domain=UINT8)
    out = random_shift(batch, pad, rng=RNGPolicy(seed), counter_base=counter)
    padded = np.pad(img[0], ((0, 0), (pad, pad), (pad, pad)), mode="edge")
    found = False
    h, w = 9, 9
    for dy in range(2 * pad + 1):
        for dx in range(2 * pad + 1):
            if np.array_equal(out.data[0], padded[:, dy:dy + h, dx:dx + w]):
                found = True
                break
        if found:
            break
    assert found, "shifted output is not any crop of the padded input"
