"""
Trained network against EXP upsampling
======================================

Train the two-stage network on 128 synthetic 64x64 scenes with 8 bands
and compare it with plain EXP interpolation on 50 held-out scenes. This
takes about five minutes on one CPU core. The trained network wins
clearly on ERGAS, SCC and Q2n, and stays slightly behind EXP on SAM.

``--quick`` trains for a few epochs only, which shows the pipeline but is
not enough for the network to catch up with EXP.
"""

import sys

from proxpan.desk import DeskExperiment, run_desk_experiment

exp = DeskExperiment()
if "--quick" in sys.argv:
    exp = DeskExperiment(train_count=32, test_count=10, epochs=5, decay_every=3)

result = run_desk_experiment(exp, callback=lambda e, loss, lr: print(f"epoch {e:2d}  loss {loss:.1f}"))
print(f"training took {result.train_seconds:.0f} s")
print(f"{'':8}{'SAM':>8}{'ERGAS':>8}{'SCC':>8}{'Q2n':>8}")
for name, summary in (("network", result.network), ("EXP", result.exp)):
    row = "".join(f"{summary[k][0]:8.3f}" for k in ("sam_degrees", "ergas", "scc", "q2n"))
    print(f"{name:8}{row}")
