import numpy as np
import pytest

from proxpan.errors import ShapeError
from proxpan.model import FusionPair, PriorWeights, objective_value
from proxpan.metrics import scc
from proxpan.wald import (
    DatasetManifest,
    blur,
    blur_decimate,
    desk_banks,
    exp_upsample,
    gaussian_kernel,
    load_training_set,
    make_reduced_pair,
    split_dataset,
    synth_dataset,
    synth_sample,
)


def keys(x, a=-0.5):
    x = abs(x)
    if x <= 1:
        return (a + 2) * x**3 - (a + 3) * x**2 + 1
    if x < 2:
        return a * x**3 - 5 * a * x**2 + 8 * a * x - 4 * a
    return 0.0


def test_gaussian_kernel():
    k = gaussian_kernel(4)
    assert k.sum() == pytest.approx(1.0)
    assert len(k) == 2 * 6 + 1  # ceil(3 * 1.7)
    np.testing.assert_allclose(k, k[::-1])
    assert k[6] / k[7] == pytest.approx(np.exp(0.5 / 1.7**2))


def test_constants_survive_every_operator():
    img = np.full((16, 16, 3), 2.5)
    np.testing.assert_allclose(blur(img, 4), img)
    np.testing.assert_allclose(blur_decimate(img, 4), np.full((4, 4, 3), 2.5))
    np.testing.assert_allclose(exp_upsample(img[:4, :4], 4), np.full((16, 16, 3), 2.5))


def test_dimensions_and_errors():
    assert blur_decimate(np.zeros((64, 32, 8)), 4).shape == (16, 8, 8)
    assert exp_upsample(np.zeros((16, 8, 8)), 4).shape == (64, 32, 8)
    with pytest.raises(ShapeError):
        blur_decimate(np.zeros((30, 32, 1)), 4)
    with pytest.raises(ValueError):
        exp_upsample(np.zeros((4, 4, 1)), 3)


def test_blur_impulse_matches_direct_convolution():
    img = np.zeros((21, 21, 1))
    img[10, 10, 0] = 1.0
    k = gaussian_kernel(4)
    expected = np.zeros((21, 21))
    expected[4:17, 4:17] = np.outer(k, k)
    np.testing.assert_allclose(blur(img, 4)[..., 0], expected, atol=1e-15)


def test_decimation_offset_zero(rng):
    img = rng.standard_normal((8, 8, 1))
    np.testing.assert_array_equal(blur_decimate(img, 4), blur(img, 4)[::4, ::4])


def test_ratio_two_matches_keys_oracle(rng):
    x = rng.standard_normal((10, 10, 1))
    up = exp_upsample(x, 2)[..., 0]
    for i in range(4, 15):
        for j in range(4, 15):
            yi, xj = i / 2, j / 2
            val = sum(
                keys(yi - p) * keys(xj - q) * x[p, q, 0]
                for p in range(int(yi) - 2, int(yi) + 3)
                for q in range(int(xj) - 2, int(xj) + 3)
                if 0 <= p < 10 and 0 <= q < 10
            )
            assert up[i, j] == pytest.approx(val, abs=1e-12)


def test_quadratic_ramp_is_reproduced():
    n = 12
    r = np.arange(n, dtype=np.float64)
    field = (0.3 * r[:, None] ** 2 - r[None, :] + 2.0)[..., None]
    up = exp_upsample(field, 4)[..., 0]
    fine = np.arange(4 * n) / 4.0
    exact = 0.3 * fine[:, None] ** 2 - fine[None, :] + 2.0
    # edge replication breaks the polynomial near the border only
    np.testing.assert_allclose(up[8:-16, 8:-16], exact[8:-16, 8:-16], atol=1e-4)
    np.testing.assert_array_equal(up[::4, ::4], field[..., 0])


def test_reduced_pair_shapes_and_structure(rng):
    analysis, synthesis = desk_banks(4, 4, 3, seed=1)
    pan, ms, ms_up, gt, _ = synth_sample(rng, (64, 64), analysis, synthesis, 0.1,
                                         protocol="wald", offset=1.0)
    assert pan.shape == (64, 64, 1)
    assert ms.shape == (16, 16, 4)
    assert ms_up.shape == gt.shape == (64, 64, 4)
    assert scc(ms_up, gt) > 0
    again = make_reduced_pair(gt, pan, 4)
    np.testing.assert_array_equal(again[1], ms)
    with pytest.raises(ShapeError):
        make_reduced_pair(gt, pan[:32], 4)


def test_desk_banks_properties():
    analysis, synthesis = desk_banks(8, 5, 3, seed=2)
    assert analysis.count == 5 and analysis.bands == 8
    np.testing.assert_allclose(analysis.d_common.sum(axis=(0, 1)), 1.0)
    assert np.all(analysis.h_common > 0)
    np.testing.assert_array_equal(synthesis.g_common, analysis.h_common)


def test_model_protocol_fits_exactly(rng):
    analysis, synthesis = desk_banks(3, 3, 3, seed=0)
    pan, ms, ms_up, gt, f = synth_sample(rng, (16, 16), analysis, synthesis, 0.2, protocol="model")
    assert objective_value(FusionPair(pan, ms_up), f, analysis, PriorWeights()) <= 1e-20
    with pytest.raises(ValueError):
        synth_sample(rng, (16, 16), analysis, synthesis, 0.2, protocol="nope")


def test_synth_dataset_round_trip_and_determinism(tmp_path):
    analysis, synthesis = desk_banks(2, 2, 3, seed=0)
    m1 = synth_dataset(tmp_path / "a", 3, (16, 16), analysis, synthesis, seed=5)
    m2 = synth_dataset(tmp_path / "b", 3, (16, 16), analysis, synthesis, seed=5)
    assert len(m1) == 3
    for e in m1.entries:
        for key in ("pan", "ms", "ms_up", "gt"):
            assert (tmp_path / "a" / e[key]).read_bytes() == (tmp_path / "b" / e[key]).read_bytes()
    back = DatasetManifest.read(tmp_path / "a" / "manifest.jsonl")
    assert back.entries == m1.entries and back.ratio == 4 and back.seed == 5
    data = load_training_set(back)
    assert data.pan.shape == (3, 16, 16, 1) and data.gt.shape == (3, 16, 16, 2)
    empty = synth_dataset(tmp_path / "c", 0, (16, 16), analysis, synthesis)
    assert len(empty) == 0
    assert (tmp_path / "c" / "manifest.jsonl").read_text() == ""


def test_split_dataset():
    m = DatasetManifest(".", [{"id": i, "split": "all"} for i in range(10)])
    train, test = split_dataset(m, 0.9, seed=1)
    assert len(train) == 9 and len(test) == 1
    ids = {e["id"] for e in train.entries} | {e["id"] for e in test.entries}
    assert ids == set(range(10))
    assert {e["split"] for e in train.entries} == {"train"}
    assert split_dataset(m, 0.9, seed=1)[1].entries == test.entries
    assert m.entries[0]["split"] == "all"
    with pytest.raises(ValueError):
        split_dataset(m, 1.0)
