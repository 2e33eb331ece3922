"""Pansharpening quality indexes.

Reduced resolution (reference available): Q2n (Q4/Q8), SAM, ERGAS, SCC.
Full resolution (no reference): D_lambda, D_s and QNR.

All functions take images of shape ``(H, W, B)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.ndimage import correlate

from .errors import ShapeError, UndefinedMetricError

LAPLACIAN = np.array([[0.0, -1.0, 0.0], [-1.0, 4.0, -1.0], [0.0, -1.0, 0.0]])


def _pair(fused, reference):
    f = np.asarray(fused, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if f.ndim == 2:
        f = f[..., None]
    if r.ndim == 2:
        r = r[..., None]
    if f.shape != r.shape or f.ndim != 3:
        raise ShapeError(f"fused {f.shape} and reference {r.shape} must be equal (H, W, B) arrays")
    return f, r


def sam(fused, reference):
    """Mean spectral angle in degrees over pixels where both spectra are nonzero."""
    f, r = _pair(fused, reference)
    if f.shape[-1] < 2:
        raise ShapeError("SAM needs at least two bands")
    nf = np.linalg.norm(f, axis=-1)
    nr = np.linalg.norm(r, axis=-1)
    valid = (nf > 0) & (nr > 0)
    if not np.any(valid):
        raise UndefinedMetricError("SAM undefined: every pixel has a zero spectrum")
    # 2 atan(|a - b| / |a + b|) on unit vectors stays accurate near 0 and 180 degrees
    a = f[valid] / nf[valid, None]
    b = r[valid] / nr[valid, None]
    angle = 2.0 * np.arctan2(np.linalg.norm(a - b, axis=-1), np.linalg.norm(a + b, axis=-1))
    return float(np.degrees(np.mean(angle)))


def ergas(fused, reference, ratio=4):
    """``100 / ratio * sqrt(mean_b (RMSE_b / mean_b)^2)``."""
    f, r = _pair(fused, reference)
    if ratio < 1:
        raise ValueError("ratio must be at least 1")
    mu = r.mean(axis=(0, 1))
    if np.any(mu == 0):
        raise UndefinedMetricError("ERGAS undefined: a reference band has zero mean")
    rmse = np.sqrt(np.mean((f - r) ** 2, axis=(0, 1)))
    return float(100.0 / ratio * np.sqrt(np.mean((rmse / mu) ** 2)))


def _highpass(band):
    return correlate(band, LAPLACIAN, mode="constant", cval=0.0)


def scc(fused, reference):
    """Band-averaged Pearson correlation of Laplacian-filtered images."""
    f, r = _pair(fused, reference)
    values = []
    for b in range(f.shape[-1]):
        hf = _highpass(f[..., b]).ravel()
        hr = _highpass(r[..., b]).ravel()
        hf = hf - hf.mean()
        hr = hr - hr.mean()
        denom = math.sqrt(float(hf @ hf) * float(hr @ hr))
        if denom == 0:
            raise UndefinedMetricError(f"SCC undefined: band {b} has a constant high-pass response")
        values.append(float(hf @ hr) / denom)
    return float(np.mean(values))


def uiqi_block(a, b):
    """Universal image quality index of two equally sized windows.

    Returns 0 when the index is undefined (zero denominator).
    """
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape or a.size < 2:
        raise ShapeError("windows must be equal and hold at least two pixels")
    ma, mb = a.mean(), b.mean()
    da, db = a - ma, b - mb
    var_a, var_b = np.mean(da * da), np.mean(db * db)
    cov = np.mean(da * db)
    den = (var_a + var_b) * (ma * ma + mb * mb)
    if den == 0:
        return 0.0
    return float(4.0 * cov * ma * mb / den)


def _blocks(h, w, block):
    for i in range(0, h - block + 1, block):
        for j in range(0, w - block + 1, block):
            yield slice(i, i + block), slice(j, j + block)


def uiqi(a, b, block=32):
    """Mean of :func:`uiqi_block` over non-overlapping windows.

    Images smaller than ``block`` are treated as a single window.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"images differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    block = min(block, h, w)
    return float(np.mean([uiqi_block(a[si, sj], b[si, sj]) for si, sj in _blocks(h, w, block)]))


# ---------------------------------------------------------------------------
# Hypercomplex (Cayley-Dickson) algebra for Q2n
# ---------------------------------------------------------------------------

def cd_conj(x):
    """Conjugate of Cayley-Dickson numbers stored along the last axis."""
    y = -x
    y[..., 0] = x[..., 0]
    return y


def cd_mul(x, y):
    """Cayley-Dickson product along the last axis (length a power of two).

    With ``x = (a, b)`` and ``y = (c, d)`` split in halves,
    ``x y = (a c - conj(d) b, d a + b conj(c))``.
    """
    n = x.shape[-1]
    if n == 1:
        return x * y
    h = n // 2
    a, b = x[..., :h], x[..., h:]
    c, d = y[..., :h], y[..., h:]
    return np.concatenate(
        [cd_mul(a, c) - cd_mul(cd_conj(d), b), cd_mul(d, a) + cd_mul(b, cd_conj(c))], axis=-1
    )


def _pad_pow2(x):
    b = x.shape[-1]
    n = 1 << (b - 1).bit_length()
    if n == b:
        return x
    return np.concatenate([x, np.zeros(x.shape[:-1] + (n - b,))], axis=-1)


def q2n_block(za, zb):
    """Hypercomplex quality index of two ``(h, w, 2^n)`` windows.

    ``4 |cov(za, zb)| |mean za| |mean zb| / ((var za + var zb)(|mean za|^2 + |mean zb|^2))``
    with ``cov = E[(za - mean za) conj(zb - mean zb)]``; 0 when undefined.
    """
    za = za.reshape(-1, za.shape[-1])
    zb = zb.reshape(-1, zb.shape[-1])
    ma, mb = za.mean(axis=0), zb.mean(axis=0)
    da, db = za - ma, zb - mb
    var_a = np.mean(np.sum(da * da, axis=-1))
    var_b = np.mean(np.sum(db * db, axis=-1))
    cov = cd_mul(da, cd_conj(db)).mean(axis=0)
    na2, nb2 = float(ma @ ma), float(mb @ mb)
    den = (var_a + var_b) * (na2 + nb2)
    if den == 0:
        return 0.0
    return float(4.0 * np.linalg.norm(cov) * math.sqrt(na2 * nb2) / den)


def q2n(fused, reference, block=32):
    """Q2n index (Q4 for 4 bands, Q8 for 8): mean hypercomplex UIQI over non-overlapping blocks.

    Bands are zero-padded up to the next power of two. Values lie in [0, 1].
    """
    f, r = _pair(fused, reference)
    h, w, _ = f.shape
    if h < block or w < block:
        raise UndefinedMetricError(f"image {h}x{w} is smaller than one {block}x{block} block")
    zf, zr = _pad_pow2(f), _pad_pow2(r)
    return float(np.mean([q2n_block(zf[si, sj], zr[si, sj]) for si, sj in _blocks(h, w, block)]))


# ---------------------------------------------------------------------------
# Full-resolution indexes
# ---------------------------------------------------------------------------

def _scaled_block(block, size, full_size):
    return max(2, int(round(block * size / full_size)))


def d_lambda(fused, ms, block=32):
    """Spectral distortion: mean |Q(F_b, F_c) - Q(M_b, M_c)| over ordered band pairs.

    ``ms`` may be the native-resolution or the upsampled MS image; for the
    former the window shrinks by the resolution ratio.
    """
    f = np.asarray(fused, dtype=np.float64)
    m = np.asarray(ms, dtype=np.float64)
    bands = f.shape[-1]
    if bands < 2:
        raise ShapeError("D_lambda needs at least two bands")
    if m.shape[-1] != bands:
        raise ShapeError(f"fused has {bands} bands, MS has {m.shape[-1]}")
    block_ms = _scaled_block(block, m.shape[0], f.shape[0])
    total = 0.0
    for b in range(bands):
        for c in range(b + 1, bands):
            qf = uiqi(f[..., b], f[..., c], block)
            qm = uiqi(m[..., b], m[..., c], block_ms)
            total += 2 * abs(qf - qm)
    return float(total / (bands * (bands - 1)))


def d_s(fused, ms, pan, pan_lr, block=32):
    """Spatial distortion: mean_b |Q(F_b, P) - Q(M_b, P_LR)|.

    ``ms`` and ``pan_lr`` share a resolution (native MS scale, or both the
    upsampled scale); ``fused`` and ``pan`` share the full resolution.
    """
    f = np.asarray(fused, dtype=np.float64)
    m = np.asarray(ms, dtype=np.float64)
    p = np.asarray(pan, dtype=np.float64).reshape(f.shape[:2])
    plr = np.asarray(pan_lr, dtype=np.float64).reshape(m.shape[:2])
    if m.shape[-1] != f.shape[-1]:
        raise ShapeError(f"fused has {f.shape[-1]} bands, MS has {m.shape[-1]}")
    block_ms = _scaled_block(block, m.shape[0], f.shape[0])
    diffs = [
        abs(uiqi(f[..., b], p, block) - uiqi(m[..., b], plr, block_ms))
        for b in range(f.shape[-1])
    ]
    return float(np.mean(diffs))


def qnr(dl, ds):
    """Quality with no reference, ``(1 - D_lambda)(1 - D_s)``."""
    return float((1.0 - dl) * (1.0 - ds))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

REDUCED_FIELDS = ("q2n", "sam_degrees", "ergas", "scc")
FULL_FIELDS = ("d_lambda", "d_s", "qnr")
CSV_COLUMNS = ("name", "mode") + REDUCED_FIELDS + FULL_FIELDS


@dataclass
class MetricsReport:
    mode: str
    name: str = ""
    q2n: float | None = None
    sam_degrees: float | None = None
    ergas: float | None = None
    scc: float | None = None
    d_lambda: float | None = None
    d_s: float | None = None
    qnr: float | None = None

    def fields(self):
        """Mode-appropriate metric values."""
        names = REDUCED_FIELDS if self.mode == "reduced" else FULL_FIELDS
        return {k: getattr(self, k) for k in names}

    def to_json(self):
        return json.dumps({"name": self.name, "mode": self.mode, **self.fields()})

    def csv_row(self):
        d = asdict(self)
        return ["" if d[c] is None else (repr(d[c]) if isinstance(d[c], float) else d[c])
                for c in CSV_COLUMNS]


def evaluate_reduced(fused, reference, ratio=4, block=32, name=""):
    """All reference-based indexes. Q2n is skipped for images smaller than ``block``."""
    f, r = _pair(fused, reference)
    q = q2n(f, r, block) if min(f.shape[:2]) >= block else None
    return MetricsReport(
        mode="reduced", name=name, q2n=q, sam_degrees=sam(f, r),
        ergas=ergas(f, r, ratio), scc=scc(f, r),
    )


def evaluate_full(fused, ms, pan, pan_lr, block=32, name=""):
    """No-reference indexes."""
    dl = d_lambda(fused, ms, block)
    ds = d_s(fused, ms, pan, pan_lr, block)
    return MetricsReport(mode="full", name=name, d_lambda=dl, d_s=ds, qnr=qnr(dl, ds))


def summarize(reports):
    """Per-metric ``(mean, std)`` over a batch of reports of the same mode."""
    if not reports:
        raise ValueError("no reports to summarize")
    out = {}
    for key in reports[0].fields():
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if vals:
            out[key] = (float(np.mean(vals)), float(np.std(vals)))
    return out


def reports_to_csv(reports):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for r in reports:
        writer.writerow(r.csv_row())
    return buf.getvalue()


def reports_to_jsonl(reports):
    return "".join(r.to_json() + "\n" for r in reports)
