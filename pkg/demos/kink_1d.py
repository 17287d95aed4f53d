"""A one-dimensional kink captured by a two-neuron network.

The solution of -u'' = 0 on (0, 1) with a unit flux jump at x = 1/3 is
piecewise linear.  Feeding |x - 1/3| to the network as an extra input lets a
smooth function of (x, z) represent the kink, so LM drives the loss to
round-off in a few hundred epochs.

Run with ``python3 demos/kink_1d.py``.
"""

import numpy as np

from cusppinn.bench import make_example, run_trial
from cusppinn.problem import NetworkSolution

spec = make_example("ex1")
print(spec.title, "arch", spec.arch, "counts", spec.counts)

trial = run_trial(spec, seed=[0, 0])
tr = trial.train
print(f"stopped by {tr.termination} after {tr.epochs} epochs, final loss {tr.final_loss:.2e}")
print(f"max abs error on {trial.errors.M_test} test points: {trial.errors.abs_linf:.2e}")

# the kink lives in the composition x -> (x, |phi(x)|), not in the network
u = NetworkSolution(trial.params, spec.level_set)
x = np.linspace(0.0, 1.0, 7)[:, None]
for xi, ui, ue in zip(x[:, 0], u(x), spec.exact(x)):
    print(f"  x={xi:.3f}  u={ui:+.8f}  exact={ue:+.8f}")
