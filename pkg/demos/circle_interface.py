"""Circular interface in 2-D: accuracy versus width, and the normal-derivative jump.

Trains one network per width on the circle problem with M0 = 20, then checks
that the jump in the normal derivative of the composed solution across the
interface equals 2 U_z |grad phi|, which is what the |phi| input produces.

Run with ``python3 demos/circle_interface.py`` (about a minute).
"""

import numpy as np

from cusppinn import diffnet
from cusppinn.bench import make_example, run_trial
from cusppinn.problem import NetworkSolution

spec = make_example("ex2", M0=20)
print(spec.title, "counts", spec.counts)

for n in (5, 10, 20):
    t = run_trial(spec, arch=(1, n), seed=[0, 0], config={"max_epochs": 500})
    e = t.errors
    print(f"N={n:>2}  params={t.params.n_params:>4}  rel Linf {e.rel_linf:.2e}  rel L2 {e.rel_l2:.2e}  "
          f"loss {t.train.final_loss:.1e}")

ls = spec.level_set
sol = NetworkSolution(t.params, ls)
xg = ls.sample(50, np.random.default_rng(1))
normal = xg / np.linalg.norm(xg, axis=1, keepdims=True)
h = 1e-4

def dn(side):
    # one-sided second-order difference along the normal
    s = 1 if side == "+" else -1
    u0, u1, u2 = (sol(xg + s * k * h * normal) for k in range(3))
    return s * (-3 * u0 + 4 * u1 - u2) / (2 * h)

jets = diffnet.forward_jet(t.params, np.column_stack([xg, np.zeros(len(xg))]))
predicted = 2 * jets.u_z * np.linalg.norm(ls.grad(xg), axis=1)
print(f"max |[du/dn] - 2 U_z |grad phi|| over 50 interface points: {np.max(np.abs(dn('+') - dn('-') - predicted)):.1e}")
