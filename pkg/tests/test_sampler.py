import math

import numpy as np
import pytest

from autolut import SamplerWeights, effective_receptive_field, normalize, sample
from autolut.errors import ContractViolationError, InvalidConfigError, InvalidInputError


def test_normalize_uniform_for_zero_logits():
    w = normalize(SamplerWeights(np.zeros((3, 3, 4))))
    assert np.allclose(w, 1.0 / 9.0, atol=1e-15)


def test_normalize_saturates_on_large_logit():
    logits = np.zeros((3, 3, 4))
    logits[1, 2, 0] = 40.0
    w = normalize(SamplerWeights(logits))
    assert w[1, 2, 0] == pytest.approx(1.0, abs=1e-15)
    others = w[:, :, 0].copy()
    others[1, 2] = 0.0
    assert others.max() < 1e-15


def test_normalize_two_point_slice():
    # softmax over (0, ln 2) -> (1/3, 2/3); other positions masked way down
    logits = np.zeros((3, 3, 4))
    logits[:, :, 1] = -1e9
    logits[0, 0, 1] = 0.0
    logits[0, 1, 1] = math.log(2.0)
    w = normalize(SamplerWeights(logits))
    assert w[0, 0, 1] == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert w[0, 1, 1] == pytest.approx(2.0 / 3.0, rel=1e-12)


def test_normalize_property_sums_and_nonneg():
    rng = np.random.default_rng(10)
    for _ in range(200):
        k = rng.choice([1, 3, 5, 7])
        w = normalize(SamplerWeights(rng.normal(0, 5, size=(k, k, 4))))
        assert np.all(w >= 0.0)
        assert np.abs(w.sum(axis=(0, 1)) - 1.0).max() < 1e-6


def test_normalize_shift_invariance():
    rng = np.random.default_rng(30)
    logits = rng.normal(0, 2, size=(5, 5, 4))
    a = normalize(SamplerWeights(logits))
    b = normalize(SamplerWeights(logits + 123.456))
    assert np.allclose(a, b, atol=1e-12)


def test_sample_constant_patch():
    rng = np.random.default_rng(1)
    w = normalize(SamplerWeights(rng.normal(0, 1, size=(3, 3, 4))))
    quad = sample(np.full((3, 3), 200.0), w)
    assert quad.shape == (2, 2)
    assert np.allclose(quad, 200.0, atol=1e-12)


def test_sample_one_hot_reproduces_fixed_corner_pattern():
    # one-hot channels picking (0,0),(0,1),(1,0),(1,1) of a 3x3 patch
    logits = np.full((3, 3, 4), -1e9)
    for c, (i, j) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        logits[i, j, c] = 0.0
    w = normalize(SamplerWeights(logits))
    patch = np.arange(9, dtype=np.float64).reshape(3, 3) * 20
    quad = sample(patch, w)
    assert np.allclose(quad, [[patch[0, 0], patch[0, 1]], [patch[1, 0], patch[1, 1]]])


def test_sample_uniform_weights_mean():
    w = normalize(SamplerWeights(np.zeros((3, 3, 4))))
    quad = sample(np.arange(9, dtype=np.float64).reshape(3, 3), w)
    assert np.allclose(quad, 4.0, atol=1e-12)


def test_sample_range_preservation_100k():
    rng = np.random.default_rng(77)
    n = 100_000
    k = 3
    patches = rng.uniform(0.0, 255.0, size=(n, k, k))
    logits = rng.normal(0, 3, size=(n, k, k, 4))
    shifted = logits - logits.max(axis=(1, 2), keepdims=True)
    e = np.exp(shifted)
    w = e / e.sum(axis=(1, 2), keepdims=True)
    quads = np.einsum("nij,nijc->nc", patches, w)
    lo = patches.min(axis=(1, 2))[:, None]
    hi = patches.max(axis=(1, 2))[:, None]
    assert np.all(quads >= lo - 1e-9)
    assert np.all(quads <= hi + 1e-9)
    # spot-check the vectorized draw agrees with the public op
    for i in rng.integers(0, n, size=20):
        assert np.allclose(sample(patches[i], w[i]).reshape(4), quads[i], atol=1e-12)


def test_sample_k1_identity():
    w = normalize(SamplerWeights(np.zeros((1, 1, 4))))
    quad = sample(np.array([[93.0]]), w)
    assert np.allclose(quad, 93.0, atol=0.0)


def test_sample_rejects_unnormalized():
    w = np.full((3, 3, 4), 0.2)
    with pytest.raises(ContractViolationError):
        sample(np.zeros((3, 3)), w)


def test_sample_rejects_bad_patch():
    w = normalize(SamplerWeights(np.zeros((3, 3, 4))))
    with pytest.raises(InvalidInputError):
        sample(np.full((3, 3), 300.0), w)
    with pytest.raises(InvalidInputError):
        sample(np.zeros((5, 5)), w)


def test_sensitivity_every_pixel_live():
    rng = np.random.default_rng(5)
    k = 5
    w = normalize(SamplerWeights(rng.normal(0, 1, size=(k, k, 4))))
    patch = rng.uniform(40.0, 200.0, size=(k, k))
    base = sample(patch, w)
    for i in range(k):
        for j in range(k):
            bumped = patch.copy()
            bumped[i, j] += 16.0
            assert np.abs(sample(bumped, w) - base).max() > 0.0


def test_effective_receptive_field():
    assert effective_receptive_field(3) == 5
    assert effective_receptive_field(5) == 9
    assert effective_receptive_field(1) == 1
    with pytest.raises(InvalidConfigError):
        effective_receptive_field(4)


def test_sampler_weights_validation():
    with pytest.raises(InvalidConfigError):
        SamplerWeights(np.zeros((2, 2, 4)))
    with pytest.raises(InvalidInputError):
        SamplerWeights(np.full((3, 3, 4), np.nan))
