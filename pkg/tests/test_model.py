import numpy as np
import pytest

from conftest import naive_conv, random_banks, random_features, random_pair, random_synthesis
from proxpan.errors import ShapeError
from proxpan.model import (
    AnalysisBanks,
    FeatureTriple,
    FusionPair,
    PriorWeights,
    build_joint,
    objective_value,
    reconstruct_hrms,
    synthesize_ms,
    synthesize_pan,
)
from proxpan.raster import conv2d_same


def loop_sum(stacks_and_banks):
    return sum(naive_conv(x, w) for x, w in stacks_and_banks)


def test_synthesis_zero_features(rng):
    banks = random_banks(rng)
    syn = random_synthesis(rng)
    z = FeatureTriple.zeros((6, 5, 3))
    assert not np.any(synthesize_pan(z.c, z.u, banks))
    assert not np.any(synthesize_ms(z.c, z.v, banks))
    assert not np.any(reconstruct_hrms(z, syn))


def test_term_dropout(rng):
    banks = random_banks(rng)
    syn = random_synthesis(rng)
    f = random_features(rng)
    zero = np.zeros_like(f.c)
    np.testing.assert_array_equal(synthesize_pan(f.c, zero, banks), conv2d_same(f.c, banks.d_common))
    np.testing.assert_array_equal(synthesize_ms(f.c, zero, banks), conv2d_same(f.c, banks.h_common))
    only_c = FeatureTriple(f.c, zero, zero)
    np.testing.assert_array_equal(reconstruct_hrms(only_c, syn), conv2d_same(f.c, syn.g_common))


def test_synthesis_matches_loop_oracle(rng):
    banks = random_banks(rng)
    syn = random_synthesis(rng)
    f = random_features(rng, 4, 4)
    np.testing.assert_allclose(
        synthesize_pan(f.c, f.u, banks),
        loop_sum([(f.c, banks.d_common), (f.u, banks.d_unique)]), rtol=1e-6, atol=1e-10)
    np.testing.assert_allclose(
        synthesize_ms(f.c, f.v, banks),
        loop_sum([(f.c, banks.h_common), (f.v, banks.h_unique)]), rtol=1e-6, atol=1e-10)
    np.testing.assert_allclose(
        reconstruct_hrms(f, syn),
        loop_sum([(f.c, syn.g_common), (f.u, syn.g_unique_pan), (f.v, syn.g_unique_ms)]),
        rtol=1e-6, atol=1e-10)


def test_build_joint_zero_unique(rng):
    banks = random_banks(rng)
    pair = random_pair(rng)
    f = random_features(rng)
    z = FeatureTriple(f.c, np.zeros_like(f.u), np.zeros_like(f.v))
    n, l_common = build_joint(pair, z, banks)
    np.testing.assert_array_equal(n, np.concatenate([pair.pan, pair.ms_up], axis=-1))
    assert n.shape[-1] == banks.bands + 1
    assert l_common.shape == (3, 3, 3, banks.bands + 1)
    np.testing.assert_array_equal(l_common[..., :1], banks.d_common)


def test_build_joint_band_zero_is_pan_residual(rng):
    banks = random_banks(rng)
    pair = random_pair(rng)
    f = random_features(rng)
    n, _ = build_joint(pair, f, banks)
    np.testing.assert_allclose(n[..., :1], pair.pan - conv2d_same(f.u, banks.d_unique))


def test_joint_form_equals_two_term_form(rng):
    for _ in range(5):
        banks = random_banks(rng)
        pair = random_pair(rng)
        f = random_features(rng)
        two_term = (
            0.5 * np.sum((pair.pan - synthesize_pan(f.c, f.u, banks)) ** 2)
            + 0.5 * np.sum((pair.ms_up - synthesize_ms(f.c, f.v, banks)) ** 2)
        )
        n, l_common = build_joint(pair, f, banks)
        single = 0.5 * np.sum((n - conv2d_same(f.c, l_common)) ** 2)
        assert single == pytest.approx(two_term, rel=1e-6)


def test_objective_trivial_cases(rng):
    banks = random_banks(rng)
    z = FeatureTriple.zeros((6, 5, 3))
    zero_pair = FusionPair(np.zeros((6, 5, 1)), np.zeros((6, 5, 2)))
    assert objective_value(zero_pair, z, banks, PriorWeights(1, 1, 1)) == 0.0
    pair = random_pair(rng)
    expected = 0.5 * (np.sum(pair.pan**2) + np.sum(pair.ms_up**2))
    assert objective_value(pair, z, banks) == pytest.approx(expected, rel=1e-12)


def test_objective_matches_formula(rng):
    banks = random_banks(rng)
    pair = random_pair(rng)
    f = random_features(rng)
    w = PriorWeights(0.3, 0.2, 0.1)
    rp = pair.pan - loop_sum([(f.c, banks.d_common), (f.u, banks.d_unique)])
    rm = pair.ms_up - loop_sum([(f.c, banks.h_common), (f.v, banks.h_unique)])
    expected = (
        0.5 * np.sum(rp**2) + 0.5 * np.sum(rm**2)
        + 0.3 * np.abs(f.u).sum() + 0.2 * np.abs(f.v).sum() + 0.1 * np.abs(f.c).sum()
    )
    got = objective_value(pair, f, banks, w)
    assert got == pytest.approx(expected, rel=1e-6)
    assert got >= 0


def test_generative_consistency(rng):
    banks = random_banks(rng)
    f = random_features(rng)
    pair = FusionPair(synthesize_pan(f.c, f.u, banks), synthesize_ms(f.c, f.v, banks))
    scale = np.sum(pair.pan**2) + np.sum(pair.ms_up**2)
    assert objective_value(pair, f, banks) <= 1e-10 * scale


def test_shape_validation(rng):
    with pytest.raises(ShapeError):
        AnalysisBanks(np.zeros((3, 3, 2, 1)), np.zeros((3, 3, 3, 1)),
                      np.zeros((3, 3, 2, 4)), np.zeros((3, 3, 2, 4)))
    with pytest.raises(ShapeError):
        FusionPair(np.zeros((4, 4, 1)), np.zeros((5, 4, 2)))
    with pytest.raises(ShapeError):
        FeatureTriple(np.zeros((4, 4, 2)), np.zeros((4, 4, 2)), np.zeros((4, 4, 3)))
    banks = random_banks(rng, k=3)
    with pytest.raises(ShapeError):
        objective_value(random_pair(rng), FeatureTriple.zeros((6, 5, 2)), banks)
    with pytest.raises(ValueError):
        PriorWeights(-1.0, 0.0, 0.0)
