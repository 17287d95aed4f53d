"""A solution that jumps across the interface.

When u itself is discontinuous, the jump lambda is first fitted on the
interface by a small auxiliary network V (with V = -lambda there).  Writing
u = v + w, where v = V on the minus side and 0 on the plus side, moves the jump
into the sources and leaves a continuous w for the cusp-capturing network.

This runs a reduced version of the flower-interface problem, with a narrower
network and fewer epochs than the full benchmark.  Forty neurons do not resolve
the oscillatory inner solution, so the bulk error stays large, but the jump
itself is carried by V and matches lambda to the accuracy of the fit.

Run with ``python3 demos/jump_lift.py`` (a few minutes).
"""

import numpy as np

from cusppinn.bench import make_example, run_trial
from cusppinn.geometry import unit_normal
from cusppinn.jumplift import ComposedSolution

spec = make_example("ex6")
print(spec.title)

counts = spec.counts_for((1, 40))
t = run_trial(spec, arch=(1, 40), counts=counts, seed=[0, 0], config={"max_epochs": 400})
print(f"counts {counts}  jump fit loss {t.lift_fit_loss:.1e}  final loss {t.train.final_loss:.1e}")
print(f"max abs error {t.errors.abs_linf:.2e}  rel L2 {t.errors.rel_l2:.2e}")

# the composed solution carries the jump; probe it straddling the interface
ls, lam = spec.level_set, spec.problem.lam
probe = ls.sample(5, np.random.default_rng(3))
n = unit_normal(ls, probe)
sol = ComposedSolution(t.lift, t.params, ls)
jump = sol(probe + 1e-7 * n) - sol(probe - 1e-7 * n)
for p, j, ref in zip(probe, jump, lam(probe)):
    print(f"  ({p[0]:+.3f}, {p[1]:+.3f})  u+ - u- = {j:+.5f}   lambda = {ref:+.5f}")
