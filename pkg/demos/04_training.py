"""
Reverse-mode gradients and training
===================================

Gradients of the network loss come from a small recording tape. A
finite-difference check confirms them, then Adam fits a toy network on
synthetic data.
"""

import numpy as np

from proxpan import autodiff as ad
from proxpan.model import FusionPair
from proxpan.network import NetworkConfig, init_network, network_forward
from proxpan.training import TrainConfig, TrainingSet, finite_diff_check, train
from proxpan.wald import desk_banks, synth_sample

# the tape on its own
tape = ad.Tape()
x = tape.leaf(np.array([1.0, 2.0]))
loss = ad.sum_squares(x)
print("d/dx |x|^2 at (1, 2):", tape.backward(loss)[x.index])

# network gradients against central differences
rng = np.random.default_rng(0)
params = init_network(NetworkConfig(2, 3, 2, 3, 2), seed=0, dtype=np.float64, eta=0.3)
pair = FusionPair(rng.standard_normal((8, 8, 1)), rng.standard_normal((8, 8, 2)))
truth = rng.standard_normal((8, 8, 2))
err = finite_diff_check(params, pair, truth, n_samples=200)
print(f"worst relative gradient error over 200 parameters: {err:.2e}")

# a small training run
analysis, synthesis = desk_banks(4, 4, 3, seed=1)
samples = [synth_sample(rng, (32, 32), analysis, synthesis, 0.1, protocol="wald", offset=1.0)
           for _ in range(16)]
stack = lambda i: np.stack([s[i] for s in samples]).astype(np.float32)
data = TrainingSet(stack(0), stack(2), stack(3))

net = init_network(NetworkConfig(4, 3, 4, 3, 1), seed=0)
cfg = TrainConfig(learning_rate=2e-3, epochs=30, batch_size=4, decay_every=15)
result = train(data, net, cfg)
for epoch, mean_loss, lr in result.history[::5]:
    print(f"epoch {epoch:2d}  loss {mean_loss:10.2f}  lr {lr:.2e}")

fused, _ = network_forward(FusionPair(data.pan[:1], data.ms_up[:1]), result.params)
print("fused batch", fused.shape)
