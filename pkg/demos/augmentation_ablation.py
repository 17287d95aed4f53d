"""Why the extra input has to be |phi| and not phi.

On a problem whose solution has a kink across the circle, three matched runs
share collocation points and initial weights (up to the extra input column)
and differ only in what the network sees as its last input:

* ``phi_abs``: (x, |phi(x)|), which can represent the kink,
* ``phi``: (x, phi(x)), which is smooth and cannot,
* ``none``: x alone.

Run with ``python3 demos/augmentation_ablation.py`` (a few minutes).
"""

from cusppinn.bench import compare_augmentation, make_example

spec = make_example("ex2", alpha=0.0, eta=10.0, gamma=1.0, neumann=False, M0=20)
reports = compare_augmentation(spec, arch=(1, 20), modes=("phi_abs", "phi", "none"), n_trials=1,
                               config={"max_epochs": 500})
for mode, rep in reports.items():
    m = rep.mean
    print(f"{mode:>8}: rel L2 {m.rel_l2:.2e}  rel Linf {m.rel_linf:.2e}  loss {m.loss:.2e}")

ratio = reports["phi"].mean.rel_l2 / reports["phi_abs"].mean.rel_l2
print(f"smooth-input error is {ratio:.0f}x the cusp-input error")
