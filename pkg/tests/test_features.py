import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dmad.core import FloatMap, NormalMap
from dmad.errors import FormatError, MissingFileError, ValidationError
from dmad.features import (
    BUILTIN_TAG, Embedding, QuantizedNormalMap, block_mean, builtin_descriptor, dequantize_components, embed,
    normal_grid_features, normal_pair_feature, pack_codes, quantize_components, quantize_normals,
    reconstruction_pair_feature, unpack_codes,
)

from conftest import random_normals

codes = arrays(np.uint8, (4, 6, 3), elements=st.integers(0, 127))


def _q(c, mask=None):
    c = np.asarray(c)
    return QuantizedNormalMap(c, np.ones(c.shape[:2], bool) if mask is None else mask)


def test_quantize_examples():
    n = np.zeros((1, 2, 3))
    n[0, 1] = (0, 0, 1)
    n[0, 0] = (0, 0, 1)
    q = quantize_normals(NormalMap(n))
    assert q.codes[0, 1].tolist() == [64, 64, 127]
    assert quantize_components([-1, -1, -1]).tolist() == [0, 0, 0]


def test_quantize_ties_round_half_up():
    # (c + 1) / 2 * 127 == k + 0.5 exactly for c = (2k + 1) / 127 - 1
    k = np.arange(127)
    c = (2 * k + 1) / 127 - 1
    x = (c + 1) / 2 * 127
    exact = x == k + 0.5
    assert exact.sum() > 10
    assert quantize_components(c)[exact].tolist() == (k[exact] + 1).tolist()


@given(arrays(np.float64, 50, elements=st.floats(-1, 1)))
def test_quantize_idempotent_and_bounded(c):
    k = quantize_components(c)
    assert k.min() >= 0 and k.max() <= 127
    np.testing.assert_array_equal(quantize_components(dequantize_components(k)), k)


def test_quantizer_stability_matches_step_analysis():
    """Change probability per component is E|delta code|, for perturbations below one step."""
    rng = np.random.default_rng(3)
    n = random_normals(rng, (100_000,))
    for step_fraction in (0.05, 0.2, 0.5):
        delta = rng.uniform(-1, 1, n.shape) * step_fraction * 2 / 127
        changed = quantize_components(np.clip(n + delta, -1, 1)) != quantize_components(n)
        expected = step_fraction / 2
        assert abs(changed.mean() - expected) < 0.01


def test_quantizer_stability_under_small_rotation():
    """For a rotation by theta the per-component change rate is about (127 / 2) * theta * E|u_i|."""
    rng = np.random.default_rng(4)
    n = random_normals(rng, (100_000,))
    u = rng.normal(size=n.shape)
    u -= (u * n).sum(1, keepdims=True) * n
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    theta = math.radians(0.05)
    m = n * math.cos(theta) + u * math.sin(theta)
    rate = (quantize_components(m) != quantize_components(n)).mean()
    expected = 127 / 2 * theta * np.abs(u).mean()
    assert abs(rate - expected) < 0.005


def test_quantized_map_bounds():
    with pytest.raises(ValidationError):
        QuantizedNormalMap(np.full((2, 2, 3), 128), np.ones((2, 2), bool))
    with pytest.raises(ValidationError):
        QuantizedNormalMap(np.zeros((2, 2)), np.ones((2, 2), bool))


@given(codes, arrays(np.bool_, (4, 6)))
def test_pack_unpack_roundtrip(c, m):
    q = _q(c, m)
    back = unpack_codes(pack_codes(q))
    np.testing.assert_array_equal(back.codes, q.codes)
    np.testing.assert_array_equal(back.mask, q.mask)


def test_unpack_rejects_bad_maps():
    with pytest.raises(FormatError):
        unpack_codes(FloatMap(np.zeros((2, 2, 3))))
    with pytest.raises(FormatError):
        unpack_codes(FloatMap(np.full((2, 2, 1), float(1 << 21))))


def test_normal_pair_examples():
    a = np.zeros((3, 3, 3), np.uint8)
    f = normal_pair_feature(_q(a), _q(a))
    assert f.scalar_l1 == 0 and not f.diff.any()
    f = normal_pair_feature(_q(a), _q(a + 127))
    assert f.scalar_l1 == 1
    assert f.kind == "normal" and len(f.diff) == 27


@given(codes, codes, arrays(np.bool_, (4, 6)), arrays(np.bool_, (4, 6)))
def test_normal_pair_symmetric(c1, c2, m1, m2):
    if not (m1 & m2).any():
        with pytest.raises(ValidationError):
            normal_pair_feature(_q(c1, m1), _q(c2, m2))
        return
    f, g = normal_pair_feature(_q(c1, m1), _q(c2, m2)), normal_pair_feature(_q(c2, m2), _q(c1, m1))
    np.testing.assert_array_equal(f.diff, g.diff)
    assert (f.diff >= 0).all()
    assert abs(f.scalar_l1 - f.diff.mean()) <= 1e-9
    assert normal_pair_feature(_q(c1, m1), _q(c1, m1)).scalar_l1 == 0


def test_normal_pair_dimension_mismatch():
    with pytest.raises(ValidationError):
        normal_pair_feature(_q(np.zeros((2, 2, 3))), _q(np.zeros((2, 3, 3))))


@given(st.integers(0, 2**31))
def test_grid_features_match_block_mean(seed):
    rng = np.random.default_rng(seed)
    ref = _q(rng.integers(0, 128, (16, 16, 3)), rng.uniform(size=(16, 16)) < 0.8)
    probes = [_q(rng.integers(0, 128, (16, 16, 3)), rng.uniform(size=(16, 16)) < 0.8) for _ in range(3)]
    got = normal_grid_features(ref, probes, grid=4)
    for row, p in zip(got, probes):
        d = np.abs(ref.codes.astype(float) - p.codes) / 127
        want = block_mean(d, ref.mask & p.mask, 4).ravel()
        np.testing.assert_allclose(row, want, atol=1e-12)


def test_block_mean_needs_divisible_grid():
    with pytest.raises(ValidationError):
        block_mean(np.zeros((10, 10, 1)), np.ones((10, 10), bool), 3)


def test_builtin_constant_image():
    e = embed(FloatMap(np.full((256, 256, 3), 0.4)))
    assert e.dim == 2304 and e.extractor_tag == BUILTIN_TAG
    means, hog = e.values[:256], e.values[256:]
    assert np.ptp(means) == 0 and not hog.any()
    assert np.linalg.norm(e.values) == pytest.approx(1.0)


def test_builtin_deterministic_and_orientation(rng):
    img = FloatMap(rng.uniform(size=(256, 256, 1)))
    np.testing.assert_array_equal(builtin_descriptor(img), builtin_descriptor(FloatMap(img.data.copy())))
    # a horizontal ramp only votes into the 0-radian bin
    ramp = FloatMap(np.tile(np.linspace(0, 1, 256), (256, 1)))
    hog = builtin_descriptor(ramp)[256:].reshape(256, 8)
    assert hog[:, 1:].sum() == 0 and hog[:, 0].sum() > 0


def test_builtin_ignores_masked_gradients(rng):
    d = np.full((256, 256, 1), 0.5)
    mask = np.ones((256, 256), bool)
    mask[:, 128:] = False
    d[:, 128:] = rng.uniform(size=(256, 128, 1))
    hog = builtin_descriptor(FloatMap(d, mask))[256:]
    assert not hog.any()


def test_external_embedding(tmp_path):
    p = tmp_path / "e.txt"
    p.write_text("\n".join(str(i / 4096) for i in range(4096)))
    e = embed(None, f"external:{p}")
    assert e.dim == 4096 and e.values[5] == 5 / 4096
    p.write_text("1\n2\n3\n")
    with pytest.raises(ValidationError):
        embed(None, f"external:{p}")
    with pytest.raises(MissingFileError):
        embed(None, f"external:{tmp_path / 'nope.txt'}")
    with pytest.raises(ValidationError):
        embed(None, "alexnet")


def test_reconstruction_pair_examples():
    z, o = Embedding(np.zeros(4), "t"), Embedding(np.ones(4), "t")
    f = reconstruction_pair_feature(z, o)
    assert f.diff.tolist() == [1, 1, 1, 1] and f.scalar_l1 == 1
    assert reconstruction_pair_feature(o, o).scalar_l1 == 0
    with pytest.raises(ValidationError):
        reconstruction_pair_feature(z, Embedding(np.ones(4), "other"))
    with pytest.raises(ValidationError):
        reconstruction_pair_feature(z, Embedding(np.ones(5), "t"))
    with pytest.raises(ValidationError):
        Embedding([np.nan], "t")


@given(arrays(np.float64, (3, 16), elements=st.floats(-1e3, 1e3)))
def test_reconstruction_l1_is_a_metric(v):
    a, b, c = (Embedding(x, "t") for x in v)
    d = lambda x, y: reconstruction_pair_feature(x, y).scalar_l1  # noqa: E731
    assert d(a, c) <= d(a, b) + d(b, c) + 1e-9
    assert d(a, b) == d(b, a)
