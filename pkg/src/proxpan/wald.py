"""Reduced-resolution simulation, EXP upsampling and synthetic datasets.

The degradation is a separable Gaussian blur (sigma 1.7 at ratio 4,
proportional otherwise) followed by decimation at offset 0. EXP upsampling
inserts zeros and interpolates with the Keys cubic kernel (a = -0.5), one
dyadic stage per factor of two, so input sample ``i`` lands on output
sample ``ratio * i``.

Datasets live in a directory of MBT rasters plus a JSON-lines manifest,
one record per sample::

    {"id": 0, "pan": "pan_0000.mbt", "ms": "ms_0000.mbt",
     "ms_up": "ms_up_0000.mbt", "gt": "gt_0000.mbt",
     "split": "all", "ratio": 4, "seed": 7}
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ShapeError
from .model import (
    AnalysisBanks,
    FeatureTriple,
    SynthesisBanks,
    reconstruct_hrms,
    synthesize_ms,
    synthesize_pan,
)
from .raster import as_image, read_raster, write_raster

# Keys cubic (a = -0.5) evaluated at half-integer offsets
_HALF_TAPS = np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0


def gaussian_kernel(ratio):
    """Normalized 1-D Gaussian with sigma = 1.7 * ratio / 4, truncated at 3 sigma."""
    sigma = 1.7 * ratio / 4.0
    radius = int(np.ceil(3.0 * sigma))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def blur(img, ratio):
    """Separable Gaussian blur with symmetric boundary extension."""
    img = as_image(img)
    k = gaussian_kernel(ratio)
    out = correlate1d(img.astype(np.float64), k, axis=-3, mode="reflect")
    out = correlate1d(out, k, axis=-2, mode="reflect")
    return out.astype(img.dtype)


def blur_decimate(img, ratio):
    """Blur then keep every ``ratio``-th row and column starting at 0."""
    img = as_image(img)
    h, w = img.shape[-3], img.shape[-2]
    if ratio < 1 or h % ratio or w % ratio:
        raise ShapeError(f"{h}x{w} image is not divisible by ratio {ratio}")
    return blur(img, ratio)[..., ::ratio, ::ratio, :]


def _upsample2_axis(x, axis):
    n = x.shape[axis]
    xm = np.moveaxis(x, axis, 0)
    padded = np.concatenate([xm[:1], xm, xm[-1:], xm[-1:]], axis=0)
    odd = sum(t * padded[i:i + n] for i, t in enumerate(_HALF_TAPS))
    out = np.empty((2 * n,) + xm.shape[1:], dtype=x.dtype)
    out[0::2] = xm
    out[1::2] = odd
    return np.moveaxis(out, 0, axis)


def exp_upsample(ms, ratio=4):
    """EXP interpolation: dyadic cubic stages (ratio must be a power of two)."""
    ms = as_image(ms)
    if ratio < 1 or ratio & (ratio - 1):
        raise ValueError(f"unsupported ratio {ratio}: must be a power of two")
    out = ms.astype(np.float64)
    r = ratio
    while r > 1:
        out = _upsample2_axis(_upsample2_axis(out, -3), -2)
        r //= 2
    return out.astype(ms.dtype)


def make_reduced_pair(hrms_gt, pan_hr, ratio=4):
    """Wald's protocol: the given HRMS becomes the reference.

    Returns ``(pan, ms, ms_up, gt)`` where ``ms`` is the degraded reference
    and ``ms_up`` its EXP upsampling; ``pan`` is passed through.
    """
    gt = as_image(hrms_gt, "gt")
    pan = as_image(pan_hr, "pan")
    if pan.shape[-1] != 1 or pan.shape[:-1] != gt.shape[:-1]:
        raise ShapeError(f"PAN {pan.shape} does not match reference {gt.shape}")
    ms = blur_decimate(gt, ratio)
    return pan, ms, exp_upsample(ms, ratio), gt


# ---------------------------------------------------------------------------
# Synthetic datasets
# ---------------------------------------------------------------------------

@dataclass
class DatasetManifest:
    root: Path
    entries: list = field(default_factory=list)
    ratio: int = 4
    seed: int = 0

    def __len__(self):
        return len(self.entries)

    def path(self, entry, key):
        return self.root / entry[key]

    def write(self, path=None):
        """Write JSON lines (one record per sample); returns the file path."""
        path = Path(path) if path is not None else self.root / "manifest.jsonl"
        with open(path, "w") as fh:
            for e in self.entries:
                fh.write(json.dumps(e, sort_keys=True) + "\n")
        return path

    @classmethod
    def read(cls, path):
        path = Path(path)
        entries = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        ratio = entries[0]["ratio"] if entries else 4
        seed = entries[0]["seed"] if entries else 0
        return cls(path.parent, entries, ratio, seed)


def desk_banks(bands=8, count=8, size=3, seed=0, unique_scale=0.3):
    """Filter banks for synthetic scenes with radiance-like statistics.

    Common filters are nonnegative, unit-sum smoothing kernels shared by PAN,
    MS and HRMS (scaled per band by positive spectral gains), so the common
    structure appears in every image with positive band means. Unique
    filters are signed and weaker.
    """
    rng = np.random.default_rng(seed)
    base = rng.random((size, size, count, 1)) + 0.1
    base /= base.sum(axis=(0, 1), keepdims=True)
    gains = rng.uniform(0.5, 1.5, (1, 1, count, bands))
    common_ms = base * gains

    def signed(cout):
        return unique_scale * rng.uniform(-1, 1, (size, size, count, cout)) / size

    h_unique = signed(bands)
    analysis = AnalysisBanks(base, signed(1), common_ms, h_unique)
    synthesis = SynthesisBanks(common_ms.copy(), signed(bands), h_unique.copy())
    return analysis, synthesis


def sparse_features(rng, shape, sparsity):
    """Bernoulli-Gaussian maps: each entry is N(0, 1) with probability ``sparsity``, else 0."""
    return rng.standard_normal(shape) * (rng.random(shape) < sparsity)


def synth_sample(rng, dims, analysis, synthesis, sparsity, ratio=4, protocol="model",
                 offset=0.0):
    """Draw one sample; returns ``(pan, ms, ms_up, gt, features)``.

    ``protocol="model"``: PAN and ``ms_up`` are generated by the analysis
    banks and ``ms`` is the degraded ``ms_up``; the true features fit the
    observations exactly.
    ``protocol="wald"``: the generated HRMS is degraded and EXP upsampled,
    so ``ms_up`` is an interpolated observation as in real data.
    ``offset`` is a constant background added to the common features.
    """
    h, w = dims
    k = analysis.count
    c, u, v = (sparse_features(rng, (h, w, k), sparsity) for _ in range(3))
    features = FeatureTriple(c + offset, u, v)
    pan = synthesize_pan(features.c, features.u, analysis)
    gt = reconstruct_hrms(features, synthesis)
    if protocol == "model":
        ms_up = synthesize_ms(features.c, features.v, analysis)
        ms = blur_decimate(ms_up, ratio)
    elif protocol == "wald":
        pan, ms, ms_up, gt = make_reduced_pair(gt, pan, ratio)
    else:
        raise ValueError(f"unknown protocol {protocol!r}")
    return pan, ms, ms_up, gt, features


def synth_dataset(out_dir, count, dims, analysis, synthesis, sparsity=0.05, seed=0,
                  ratio=4, protocol="model", offset=0.0):
    """Generate ``count`` samples as MBT rasters under ``out_dir`` plus ``manifest.jsonl``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    manifest = DatasetManifest(out_dir, [], ratio, seed)
    for i in range(count):
        pan, ms, ms_up, gt, _ = synth_sample(
            rng, dims, analysis, synthesis, sparsity, ratio, protocol, offset
        )
        entry = {"id": i, "split": "all", "ratio": ratio, "seed": seed}
        for key, img in (("pan", pan), ("ms", ms), ("ms_up", ms_up), ("gt", gt)):
            name = f"{key}_{i:04d}.mbt"
            write_raster(img, out_dir / name)
            entry[key] = name
        manifest.entries.append(entry)
    manifest.write()
    return manifest


def split_dataset(manifest, fraction=0.9, seed=0):
    """Seeded shuffle then split into ``(train, test)`` manifests."""
    if not 0 < fraction < 1:
        raise ValueError("fraction must lie strictly between 0 and 1")
    if len(manifest) == 0:
        raise ValueError("cannot split an empty manifest")
    order = np.random.default_rng(seed).permutation(len(manifest))
    n_train = int(round(fraction * len(manifest)))
    pick = lambda idx, tag: [dict(manifest.entries[i], split=tag) for i in idx]
    train = replace(manifest, entries=pick(order[:n_train], "train"))
    test = replace(manifest, entries=pick(order[n_train:], "test"))
    return train, test


def load_training_set(manifest):
    """Stack the rasters of a manifest into a :class:`proxpan.training.TrainingSet`."""
    from .training import TrainingSet

    if isinstance(manifest, (str, Path)):
        manifest = DatasetManifest.read(manifest)
    if len(manifest) == 0:
        raise ValueError("manifest is empty")
    stacks = {key: [] for key in ("pan", "ms_up", "gt")}
    for e in manifest.entries:
        pan = read_raster(manifest.path(e, "pan"))
        ms = read_raster(manifest.path(e, "ms"))
        if pan.shape[0] != manifest.ratio * ms.shape[0] or pan.shape[1] != manifest.ratio * ms.shape[1]:
            raise ShapeError(f"sample {e.get('id')}: PAN {pan.shape} is not ratio x MS {ms.shape}")
        stacks["pan"].append(pan)
        stacks["ms_up"].append(read_raster(manifest.path(e, "ms_up")))
        stacks["gt"].append(read_raster(manifest.path(e, "gt")))
    return TrainingSet(*(np.stack(stacks[k]) for k in ("pan", "ms_up", "gt")))
