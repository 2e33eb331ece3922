"""
Quality indexes
===============

Reference-based indexes (Q2n, SAM, ERGAS, SCC) for reduced-resolution
experiments, and D_lambda, D_s and QNR when no reference exists.
"""

import numpy as np

from proxpan.metrics import (
    evaluate_full,
    evaluate_reduced,
    ergas,
    q2n,
    reports_to_csv,
    sam,
    scc,
)
from proxpan.wald import blur_decimate, exp_upsample

rng = np.random.default_rng(0)
ref = rng.uniform(0.5, 2.0, (64, 64, 8))

print("identical: sam", sam(ref, ref), "ergas", ergas(ref, ref), "scc", scc(ref, ref), "q2n", q2n(ref, ref))

# a constant +1 on a constant 10 image: RMSE/mean = 0.1, ERGAS = 25 * 0.1
flat = np.full((32, 32, 4), 10.0)
print("constant offset ERGAS:", ergas(flat + 1.0, flat, ratio=4))

# indexes degrade with noise
for sigma in (0.01, 0.1, 0.5):
    noisy = ref + sigma * rng.standard_normal(ref.shape)
    r = evaluate_reduced(noisy, ref)
    print(f"noise {sigma:<4}: q2n {r.q2n:.3f} sam {r.sam_degrees:.2f} ergas {r.ergas:.2f} scc {r.scc:.3f}")

# full resolution: judge an interpolated MS against its own inputs
pan = ref.mean(axis=-1, keepdims=True)
ms = blur_decimate(ref, 4)
full = evaluate_full(exp_upsample(ms, 4), ms, pan, blur_decimate(pan, 4), name="exp")
print(reports_to_csv([full]))
