"""Multiband rasters, the zero-padded convolution pair, and raster file I/O.

Conventions used throughout the package:

* an image (``MultibandImage``) is an array of shape ``(..., H, W, C)``;
  leading axes are batch axes and are carried through every operation;
* a feature stack is an image whose channel count is the number of
  feature maps ``K``;
* a filter bank is an array of shape ``(s, s, in_bands, out_bands)``.

Convolution is cross-correlation with zero padding and "same" output size.
For a kernel of size ``s`` the padding is ``(s - 1) // 2`` on the top/left
and ``s // 2`` on the bottom/right, so even kernels (``s = 8``) pad 3 and 4.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .errors import (
    RasterDimensionError,
    RasterFormatError,
    RasterTruncatedError,
    ShapeError,
)

MBT_MAGIC = b"MBT1"
_HEADER = struct.Struct("<4s3I")


def as_image(x, name="image"):
    """Return ``x`` as a float array of shape ``(..., H, W, C)``.

    Two-dimensional inputs are treated as single-band images.
    """
    x = np.asarray(x)
    if x.ndim == 2:
        x = x[..., None]
    if x.ndim < 3:
        raise ShapeError(f"{name} must have at least 2 dimensions, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.floating):
        x = x.astype(np.float64)
    return x


def _check_bank(w):
    w = np.asarray(w)
    if w.ndim != 4 or w.shape[0] != w.shape[1] or w.shape[0] < 1:
        raise ShapeError(f"filter bank must have shape (s, s, in, out), got {w.shape}")
    return w


def _pads(s):
    top = (s - 1) // 2
    return top, s - 1 - top


def _pad_spatial(x, s):
    top, bottom = _pads(s)
    widths = [(0, 0)] * (x.ndim - 3) + [(top, bottom), (top, bottom), (0, 0)]
    return np.pad(x, widths)


def conv2d_same(x, w):
    """Zero-padded cross-correlation of a multiband image with a filter bank.

    ``out[..., i, j, o] = sum_{a, b, c} xpad[..., i + a, j + b, c] * w[a, b, c, o]``
    """
    x = as_image(x, "input")
    w = _check_bank(w)
    if x.shape[-1] != w.shape[2]:
        raise ShapeError(
            f"input has {x.shape[-1]} channels but the bank expects {w.shape[2]}"
        )
    s = w.shape[0]
    H, W = x.shape[-3], x.shape[-2]
    xp = _pad_spatial(x, s)
    out = np.zeros(x.shape[:-1] + (w.shape[3],), dtype=np.result_type(x, w))
    for a in range(s):
        for b in range(s):
            out += xp[..., a:a + H, b:b + W, :] @ w[a, b]
    return out


def conv2d_adjoint(y, w):
    """Exact adjoint of :func:`conv2d_same` with respect to its image argument.

    Satisfies ``<conv2d_same(x, w), y> == <x, conv2d_adjoint(y, w)>``.
    """
    y = as_image(y, "input")
    w = _check_bank(w)
    if y.shape[-1] != w.shape[3]:
        raise ShapeError(
            f"input has {y.shape[-1]} channels but the bank produces {w.shape[3]}"
        )
    s = w.shape[0]
    top, _ = _pads(s)
    H, W = y.shape[-3], y.shape[-2]
    acc = np.zeros(
        y.shape[:-3] + (H + s - 1, W + s - 1, w.shape[2]), dtype=np.result_type(y, w)
    )
    for a in range(s):
        for b in range(s):
            acc[..., a:a + H, b:b + W, :] += y @ w[a, b].T
    return acc[..., top:top + H, top:top + W, :]


def conv2d_weight_grad(x, g, s):
    """Gradient of ``<conv2d_same(x, w), g>`` with respect to ``w`` (size ``s``).

    Leading batch axes of ``x`` and ``g`` are summed over.
    """
    x = as_image(x, "input")
    g = as_image(g, "output gradient")
    H, W = x.shape[-3], x.shape[-2]
    xp = _pad_spatial(x, s)
    cin, cout = x.shape[-1], g.shape[-1]
    g2 = g.reshape(-1, cout)
    dw = np.empty((s, s, cin, cout), dtype=np.result_type(x, g))
    for a in range(s):
        for b in range(s):
            dw[a, b] = xp[..., a:a + H, b:b + W, :].reshape(-1, cin).T @ g2
    return dw


def inner_product(a, b):
    """Euclidean inner product of two equally shaped arrays."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape:
        raise ShapeError(f"inner product of mismatched shapes {a.shape} and {b.shape}")
    return float(np.vdot(a.ravel(), b.ravel()))


# ---------------------------------------------------------------------------
# MBT raster files
# ---------------------------------------------------------------------------

def write_raster(img, path):
    """Write a ``(H, W, C)`` image in MBT format (little-endian float32)."""
    img = as_image(img)
    if img.ndim != 3:
        raise ShapeError(f"rasters are 3-D (H, W, C), got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ValueError("refusing to write non-finite samples")
    h, w, c = img.shape
    payload = np.ascontiguousarray(img, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MBT_MAGIC, h, w, c))
        fh.write(payload)


def read_raster(path):
    """Read an MBT raster into a float32 array of shape ``(H, W, C)``."""
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MBT_MAGIC:
        raise RasterFormatError(f"{path}: not an MBT raster (bad magic)")
    if len(data) < _HEADER.size:
        raise RasterTruncatedError(f"{path}: header truncated")
    _, h, w, c = _HEADER.unpack_from(data)
    count = h * w * c
    if count == 0 or count >= 2**32:
        raise RasterDimensionError(f"{path}: invalid dimensions {h}x{w}x{c}")
    expected = _HEADER.size + 4 * count
    if len(data) < expected:
        raise RasterTruncatedError(
            f"{path}: payload truncated ({len(data)} of {expected} bytes)"
        )
    if len(data) > expected:
        raise RasterFormatError(f"{path}: {len(data) - expected} trailing bytes")
    arr = np.frombuffer(data, dtype="<f4", count=count, offset=_HEADER.size)
    return arr.reshape(h, w, c).astype(np.float32)


def export_preview(img, bands, path):
    """Write three bands of ``img`` as an 8-bit binary PPM (P6).

    Each band is min-max stretched to 0..255 independently; a band with zero
    span maps to 0.
    """
    img = as_image(img)
    if img.ndim != 3:
        raise ShapeError(f"preview needs a (H, W, C) image, got shape {img.shape}")
    bands = list(bands)
    if len(bands) != 3:
        raise ValueError("exactly three band indices are required")
    for b in bands:
        if not 0 <= b < img.shape[2]:
            raise IndexError(f"band index {b} out of range for {img.shape[2]} bands")
    h, w, _ = img.shape
    rgb = np.zeros((h, w, 3), dtype=np.uint8)
    for k, b in enumerate(bands):
        band = img[..., b].astype(np.float64)
        lo, hi = band.min(), band.max()
        if hi > lo:
            rgb[..., k] = np.rint((band - lo) / (hi - lo) * 255.0).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())
