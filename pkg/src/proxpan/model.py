"""Convolutional sparse coding observation model for pansharpening.

PAN and upsampled MS images are both explained by a shared set of common
feature maps ``c`` plus sensor-specific maps (``u`` for PAN, ``v`` for MS):

    pan    = D^c * c + D^u * u
    ms_up  = H^c * c + H^v * v
    hrms   = G^c * c + G^u * u + G^v * v

where ``*`` is :func:`proxpan.raster.conv2d_same`. The classical objective
adds l1 priors on each feature stack to the two halved squared residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError
from .raster import as_image, conv2d_same


def _shape(x):
    # works for arrays and tape variables alike
    return tuple(x.shape) if hasattr(x, "shape") else np.shape(x)


@dataclass(frozen=True)
class AnalysisBanks:
    """Filters generating the observations from the features.

    ``d_common`` and ``d_unique`` have shape ``(s, s, K, 1)``;
    ``h_common`` and ``h_unique`` have shape ``(s, s, K, B)``.
    """

    d_common: np.ndarray
    d_unique: np.ndarray
    h_common: np.ndarray
    h_unique: np.ndarray

    def __post_init__(self):
        shapes = [_shape(w) for w in (self.d_common, self.d_unique, self.h_common, self.h_unique)]
        if any(len(sh) != 4 for sh in shapes):
            raise ShapeError(f"analysis banks must be 4-D, got {shapes}")
        s, _, k, _ = shapes[0]
        if any(sh[:3] != (s, s, k) for sh in shapes):
            raise ShapeError(f"analysis banks disagree on (s, s, K): {shapes}")
        if shapes[0][3] != 1 or shapes[1][3] != 1:
            raise ShapeError("PAN banks must have exactly one output band")
        if shapes[2][3] != shapes[3][3]:
            raise ShapeError("MS banks must agree on the band count")

    @property
    def size(self):
        return _shape(self.d_common)[0]

    @property
    def count(self):
        return _shape(self.d_common)[2]

    @property
    def bands(self):
        return _shape(self.h_common)[3]


@dataclass(frozen=True)
class SynthesisBanks:
    """Filters fusing the three feature stacks into the HRMS estimate."""

    g_common: np.ndarray
    g_unique_pan: np.ndarray
    g_unique_ms: np.ndarray

    def __post_init__(self):
        shapes = {_shape(w) for w in (self.g_common, self.g_unique_pan, self.g_unique_ms)}
        if len(shapes) != 1 or len(next(iter(shapes))) != 4:
            raise ShapeError(f"synthesis banks must share one 4-D shape, got {shapes}")


@dataclass(frozen=True)
class FeatureTriple:
    """Common (``c``), PAN-unique (``u``) and MS-unique (``v``) feature stacks."""

    c: np.ndarray
    u: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        if not (_shape(self.c) == _shape(self.u) == _shape(self.v)):
            raise ShapeError(
                f"feature stacks differ: {_shape(self.c)}, {_shape(self.u)}, {_shape(self.v)}"
            )

    @classmethod
    def zeros(cls, shape, dtype=np.float64):
        return cls(np.zeros(shape, dtype), np.zeros(shape, dtype), np.zeros(shape, dtype))


@dataclass(frozen=True)
class FusionPair:
    """A PAN image ``(..., H, W, 1)`` and the upsampled MS image ``(..., H, W, B)``."""

    pan: np.ndarray
    ms_up: np.ndarray

    def __post_init__(self):
        pan = as_image(self.pan, "pan")
        ms_up = as_image(self.ms_up, "ms_up")
        if pan.shape[-1] != 1:
            raise ShapeError(f"PAN must be single band, got {pan.shape[-1]} bands")
        if pan.shape[:-1] != ms_up.shape[:-1]:
            raise ShapeError(f"PAN {pan.shape} and MS {ms_up.shape} differ spatially")
        object.__setattr__(self, "pan", pan)
        object.__setattr__(self, "ms_up", ms_up)


@dataclass(frozen=True)
class PriorWeights:
    """Trade-off weights of the l1 priors on u, v and c."""

    lam1: float = 0.0
    lam2: float = 0.0
    lam3: float = 0.0

    def __post_init__(self):
        if min(self.lam1, self.lam2, self.lam3) < 0:
            raise ValueError("prior weights must be nonnegative")


def _check_features(features, banks):
    k = banks.count
    for name in ("c", "u", "v"):
        shape = _shape(getattr(features, name))
        if shape[-1] != k:
            raise ShapeError(f"feature stack {name} has {shape[-1]} maps, banks expect {k}")


def synthesize_pan(c, u, banks):
    """PAN image generated by the common and PAN-unique features."""
    return conv2d_same(c, banks.d_common) + conv2d_same(u, banks.d_unique)


def synthesize_ms(c, v, banks):
    """Upsampled MS image generated by the common and MS-unique features."""
    return conv2d_same(c, banks.h_common) + conv2d_same(v, banks.h_unique)


def reconstruct_hrms(features, g):
    """Fuse the three feature stacks into the HRMS estimate."""
    return (
        conv2d_same(features.c, g.g_common)
        + conv2d_same(features.u, g.g_unique_pan)
        + conv2d_same(features.v, g.g_unique_ms)
    )


def joint_bank(banks):
    """Stack the PAN and MS common filters into one ``(s, s, K, B + 1)`` bank, PAN first."""
    return np.concatenate([banks.d_common, banks.h_common], axis=-1)


def build_joint(pair, features, banks):
    """Operands of the joint common-feature subproblem.

    Returns ``(n, l_common)`` where ``n`` concatenates the PAN residual
    ``pan - D^u * u`` (band 0) with the MS residual ``ms_up - H^v * v``.
    """
    _check_features(features, banks)
    pan_hat = pair.pan - conv2d_same(features.u, banks.d_unique)
    ms_hat = pair.ms_up - conv2d_same(features.v, banks.h_unique)
    n = np.concatenate([pan_hat, ms_hat], axis=-1)
    return n, joint_bank(banks)


def data_misfit(pair, features, banks):
    """The two halved squared residual norms (pan term, ms term)."""
    _check_features(features, banks)
    rp = pair.pan - synthesize_pan(features.c, features.u, banks)
    rm = pair.ms_up - synthesize_ms(features.c, features.v, banks)
    return 0.5 * float(np.sum(rp * rp)), 0.5 * float(np.sum(rm * rm))


def objective_value(pair, features, banks, w=PriorWeights()):
    """Data misfit plus weighted l1 norms of u, v and c."""
    fp, fm = data_misfit(pair, features, banks)
    reg = (
        w.lam1 * float(np.sum(np.abs(features.u)))
        + w.lam2 * float(np.sum(np.abs(features.v)))
        + w.lam3 * float(np.sum(np.abs(features.c)))
    )
    return fp + fm + reg
