"""
The unfolded network
====================

Each stage replaces the soft threshold of a solver sweep with a small
residual CNN. With the CNN weights set to zero and no penalty, T stages
reproduce T solver sweeps exactly.
"""

import dataclasses

import numpy as np

from proxpan.model import FusionPair, reconstruct_hrms
from proxpan.network import (
    NetworkConfig,
    count_parameters,
    init_network,
    network_forward,
    zero_prox,
)
from proxpan.solver import SolverConfig, solve

cfg = NetworkConfig(count=4, size=3, bands=4, prox_size=3, stages=2)
params = init_network(cfg, seed=0, dtype=np.float64, eta=0.1)
print("trainable parameters:", count_parameters(params))

rng = np.random.default_rng(0)
pair = FusionPair(rng.standard_normal((16, 16, 1)), rng.standard_normal((16, 16, 4)))
out, feats = network_forward(pair, params)
print("fused", out.shape, "common features", feats.c.shape)

# zero prox weights: the network is plain gradient descent
plain = zero_prox(params)
out, feats = network_forward(pair, plain)
steps = (float(plain.eta1), float(plain.eta2), float(plain.eta3))
ref, _ = solve(pair, plain.analysis, SolverConfig(steps=steps, max_sweeps=cfg.stages))
print("max |network - solver| on features:", float(np.max(np.abs(feats.c - ref.c))))
print("max |network - solver| on output:",
      float(np.max(np.abs(out - reconstruct_hrms(ref, plain.synthesis)))))

# parameter count grows by a fixed amount per stage
for t in (1, 2, 3, 4):
    print(f"T={t}:", count_parameters(init_network(dataclasses.replace(cfg, stages=t))))

# the large reference configuration
big = init_network(NetworkConfig(count=16, size=8, bands=8, prox_size=8, stages=2))
print("K=16, s=8, B=8, k_p=8, T=2:", f"{count_parameters(big):,}")
