"""
Convolution, its adjoint, and the raster formats
================================================

Every operator in the package is built from one multichannel "same"
convolution and its exact adjoint. This script checks the adjoint identity
numerically, then writes a raster and a colour preview to disk.
"""

import tempfile
from pathlib import Path

import numpy as np

from proxpan.raster import (
    conv2d_adjoint,
    conv2d_same,
    export_preview,
    inner_product,
    read_raster,
    write_raster,
)

rng = np.random.default_rng(0)

# images are (H, W, C); a bank is (s, s, in, out)
x = rng.standard_normal((32, 32, 4))
bank = rng.standard_normal((3, 3, 4, 8))
y = rng.standard_normal((32, 32, 8))

ax = conv2d_same(x, bank)
aty = conv2d_adjoint(y, bank)
print("output shapes", ax.shape, aty.shape)

# <A x, y> and <x, A^T y> agree to rounding
lhs, rhs = inner_product(ax, y), inner_product(x, aty)
print(f"<Ax, y> = {lhs:.10f}")
print(f"<x, A'y> = {rhs:.10f}")

# even kernels pad one extra row/column at the bottom/right
even = np.zeros((4, 4, 1, 1))
even[1, 1, 0, 0] = 1.0
img = rng.standard_normal((6, 6, 1))
print("4x4 delta at (1, 1) is the identity:", np.array_equal(conv2d_same(img, even), img))

# MBT rasters round-trip float32 samples exactly
out = Path(tempfile.mkdtemp())
scene = rng.uniform(0, 1, (48, 64, 4)).astype(np.float32)
write_raster(scene, out / "scene.mbt")
print("round trip exact:", np.array_equal(read_raster(out / "scene.mbt"), scene))

export_preview(scene, (2, 1, 0), out / "scene.ppm")
print("preview written to", out / "scene.ppm")
