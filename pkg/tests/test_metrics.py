import csv
import io
import json
import math

import numpy as np
import pytest

from proxpan.errors import ShapeError, UndefinedMetricError
from proxpan.metrics import (
    CSV_COLUMNS,
    MetricsReport,
    cd_conj,
    cd_mul,
    d_lambda,
    d_s,
    ergas,
    evaluate_full,
    evaluate_reduced,
    q2n,
    qnr,
    reports_to_csv,
    reports_to_jsonl,
    sam,
    scc,
    summarize,
    uiqi,
    uiqi_block,
)


def positive_image(rng, h=32, w=32, b=4):
    return rng.uniform(0.5, 2.0, (h, w, b))


# --- SAM -------------------------------------------------------------------

def test_sam_identical_is_zero(rng):
    x = positive_image(rng)
    assert sam(x, x) == pytest.approx(0.0, abs=1e-6)


def test_sam_known_angles():
    a = np.zeros((1, 1, 2))
    a[..., 0] = 1.0
    b = np.zeros((1, 1, 2))
    b[..., 1] = 3.0
    assert sam(a, b) == pytest.approx(90.0)
    c = np.ones((1, 1, 2))
    assert sam(a, c) == pytest.approx(45.0)
    # scaling a spectrum never changes its angle
    assert sam(c * 7.0, c) == pytest.approx(0.0, abs=1e-6)


def test_sam_errors():
    with pytest.raises(UndefinedMetricError):
        sam(np.zeros((2, 2, 3)), np.zeros((2, 2, 3)))
    with pytest.raises(ShapeError):
        sam(np.ones((2, 2, 3)), np.ones((2, 2, 2)))


# --- ERGAS -----------------------------------------------------------------

def test_ergas_constant_offset():
    ref = np.full((8, 8, 3), 10.0)
    assert ergas(ref + 1.0, ref, ratio=4) == pytest.approx(2.5)
    ones = np.ones((8, 8, 2))
    assert ergas(np.full_like(ones, 1.1), ones, ratio=4) == pytest.approx(2.5)
    assert ergas(ref, ref) == 0.0


def test_ergas_matches_loop_formula(rng):
    ref = positive_image(rng, 8, 8, 3)
    fused = ref + 0.1 * rng.standard_normal(ref.shape)
    terms = []
    for b in range(3):
        mse = sum((fused[i, j, b] - ref[i, j, b]) ** 2 for i in range(8) for j in range(8)) / 64
        mu = sum(ref[i, j, b] for i in range(8) for j in range(8)) / 64
        terms.append(mse / mu**2)
    assert ergas(fused, ref, 4) == pytest.approx(25 * math.sqrt(sum(terms) / 3), rel=1e-10)


def test_ergas_zero_mean_band():
    ref = np.ones((4, 4, 2))
    ref[..., 1] = 0.0
    with pytest.raises(UndefinedMetricError):
        ergas(ref, ref)


# --- SCC -------------------------------------------------------------------

def test_scc_sign(rng):
    x = positive_image(rng, 16, 16, 3)
    assert scc(x, x) == pytest.approx(1.0)
    assert scc(-x, x) == pytest.approx(-1.0)
    assert scc(3 * x, x) == pytest.approx(1.0)
    # zero padding makes the border respond to an offset
    assert scc(x + 2, x) < 1.0


def test_scc_constant_is_undefined():
    # a constant image still has a border response under zero padding, so
    # use an all-zero one
    with pytest.raises(UndefinedMetricError):
        scc(np.zeros((6, 6, 1)), np.ones((6, 6, 1)))


# --- UIQI ------------------------------------------------------------------

def test_uiqi_block_identities(rng):
    a = rng.uniform(1, 2, (8, 8))
    assert uiqi_block(a, a) == pytest.approx(1.0)
    assert uiqi_block(np.zeros((4, 4)), np.zeros((4, 4))) == 0.0
    # b = 2*mean - a has the same mean and variance and correlation -1
    b = 2 * a.mean() - a
    assert uiqi_block(a, b) == pytest.approx(-1.0)


def test_uiqi_block_moment_oracle(rng):
    a = rng.uniform(0, 1, 50)
    b = 0.5 * a + rng.uniform(0, 1, 50)
    sa, sb = np.var(a), np.var(b)
    cov = np.cov(a, b, bias=True)[0, 1]
    ma, mb = a.mean(), b.mean()
    expected = (cov / math.sqrt(sa * sb)) * (2 * ma * mb / (ma**2 + mb**2)) \
        * (2 * math.sqrt(sa * sb) / (sa + sb))
    assert uiqi_block(a, b) == pytest.approx(expected, rel=1e-10)


def test_uiqi_averages_blocks(rng):
    a = rng.uniform(1, 2, (8, 8))
    b = rng.uniform(1, 2, (8, 8))
    blocks = [uiqi_block(a[i:i + 4, j:j + 4], b[i:i + 4, j:j + 4]) for i in (0, 4) for j in (0, 4)]
    assert uiqi(a, b, 4) == pytest.approx(np.mean(blocks))
    assert uiqi(a, b, 32) == pytest.approx(uiqi_block(a, b))


# --- Cayley-Dickson algebra ------------------------------------------------

def hamilton(p, q):
    a1, b1, c1, d1 = p
    a2, b2, c2, d2 = q
    return np.array([
        a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
        a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
        a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
        a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
    ])


def test_cd_mul_complex_and_quaternion(rng):
    for _ in range(20):
        x, y = rng.standard_normal(2), rng.standard_normal(2)
        z = complex(*x) * complex(*y)
        np.testing.assert_allclose(cd_mul(x, y), [z.real, z.imag], atol=1e-12)
        p, q = rng.standard_normal(4), rng.standard_normal(4)
        np.testing.assert_allclose(cd_mul(p, q), hamilton(p, q), atol=1e-12)


@pytest.mark.parametrize("n", [1, 2, 4, 8])
def test_cd_norm_is_multiplicative(rng, n):
    x, y = rng.standard_normal(n), rng.standard_normal(n)
    assert np.linalg.norm(cd_mul(x, y)) == pytest.approx(np.linalg.norm(x) * np.linalg.norm(y))
    np.testing.assert_allclose(cd_mul(x, cd_conj(x)), np.eye(n)[0] * (x @ x), atol=1e-12)


# --- Q2n -------------------------------------------------------------------

def test_q2n_identical_is_one(rng):
    x = positive_image(rng, 64, 64, 8)
    assert q2n(x, x) == pytest.approx(1.0)
    x4 = positive_image(rng, 32, 32, 4)
    assert q2n(x4, x4) == pytest.approx(1.0)


def test_q2n_single_band_is_abs_uiqi(rng):
    a = rng.uniform(1, 2, (32, 32, 1))
    b = 3.0 - a + 0.1 * rng.standard_normal(a.shape)
    assert q2n(a, b) == pytest.approx(abs(uiqi(a[..., 0], b[..., 0])), rel=1e-10)


def complex_q2_oracle(f, r):
    za = (f[..., 0] + 1j * f[..., 1]).ravel()
    zb = (r[..., 0] + 1j * r[..., 1]).ravel()
    ma, mb = za.mean(), zb.mean()
    va = np.mean(np.abs(za - ma) ** 2)
    vb = np.mean(np.abs(zb - mb) ** 2)
    cov = np.mean((za - ma) * np.conj(zb - mb))
    return 4 * abs(cov) * abs(ma) * abs(mb) / ((va + vb) * (abs(ma) ** 2 + abs(mb) ** 2))


def test_q2n_two_bands_matches_complex_oracle(rng):
    f = positive_image(rng, 64, 64, 2)
    r = f + 0.3 * rng.standard_normal(f.shape)
    blocks = [complex_q2_oracle(f[i:i + 32, j:j + 32], r[i:i + 32, j:j + 32])
              for i in (0, 32) for j in (0, 32)]
    assert q2n(f, r) == pytest.approx(np.mean(blocks), rel=1e-10)


def test_q2n_range_and_degradation(rng):
    r = positive_image(rng, 32, 32, 4)
    values = [q2n(r + s * rng.standard_normal(r.shape), r) for s in (0.05, 0.5, 2.0)]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert values[0] > values[1] > values[2]


def test_q2n_small_image():
    with pytest.raises(UndefinedMetricError):
        q2n(np.ones((16, 16, 4)), np.ones((16, 16, 4)))


# --- no-reference indexes --------------------------------------------------

def test_d_lambda_zero_when_structure_matches(rng):
    m = positive_image(rng, 32, 32, 3)
    assert d_lambda(m, m, block=8) == pytest.approx(0.0, abs=1e-12)


def test_d_lambda_double_loop_oracle(rng):
    f = positive_image(rng, 16, 16, 3)
    m = positive_image(rng, 16, 16, 3)
    total = 0.0
    for b in range(3):
        for c in range(3):
            if b != c:
                total += abs(uiqi(f[..., b], f[..., c], 8) - uiqi(m[..., b], m[..., c], 8))
    assert d_lambda(f, m, block=8) == pytest.approx(total / 6, rel=1e-12)


def test_d_s_oracle_and_zero(rng):
    f = positive_image(rng, 16, 16, 2)
    p = rng.uniform(1, 2, (16, 16))
    expected = np.mean([abs(uiqi(f[..., b], p, 8) - uiqi(f[..., b], p, 8)) for b in range(2)])
    assert d_s(f, f, p, p, block=8) == expected == 0.0
    m = positive_image(rng, 4, 4, 2)
    plr = rng.uniform(1, 2, (4, 4))
    expected = np.mean([abs(uiqi(f[..., b], p, 8) - uiqi(m[..., b], plr, 2)) for b in range(2)])
    assert d_s(f, m, p, plr, block=8) == pytest.approx(expected, rel=1e-12)


def test_qnr_cases():
    assert qnr(0.0, 0.0) == 1.0
    assert qnr(1.0, 0.2) == 0.0
    assert qnr(0.1, 0.2) == pytest.approx(0.72)


# --- reports ---------------------------------------------------------------

def test_reduced_report_schema(rng):
    r = positive_image(rng, 32, 32, 4)
    rep = evaluate_reduced(r, r, name="x")
    assert set(rep.fields()) == {"q2n", "sam_degrees", "ergas", "scc"}
    assert rep.q2n == pytest.approx(1.0)
    payload = json.loads(rep.to_json())
    assert payload["name"] == "x" and payload["mode"] == "reduced"
    small = evaluate_reduced(r[:8, :8], r[:8, :8])
    assert small.q2n is None


def test_full_report_and_serialization(rng):
    f = positive_image(rng, 16, 16, 2)
    p = rng.uniform(1, 2, (16, 16))
    rep = evaluate_full(f, f, p, p, block=8, name="y")
    assert rep.qnr == pytest.approx((1 - rep.d_lambda) * (1 - rep.d_s))
    rows = list(csv.reader(io.StringIO(reports_to_csv([rep, MetricsReport("reduced", "z", q2n=0.5)]))))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert rows[1][0] == "y" and rows[1][2] == ""
    assert float(rows[2][2]) == 0.5
    lines = reports_to_jsonl([rep, rep]).splitlines()
    assert len(lines) == 2 and json.loads(lines[0])["qnr"] == rep.qnr


def test_summarize():
    reps = [MetricsReport("reduced", sam_degrees=v, ergas=2 * v) for v in (1.0, 3.0)]
    s = summarize(reps)
    assert s["sam_degrees"] == (2.0, 1.0)
    assert s["ergas"] == (4.0, 2.0)
    assert "q2n" not in s
    with pytest.raises(ValueError):
        summarize([])
