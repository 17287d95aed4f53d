import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cusppinn import diffnet
from cusppinn.bench import (EXAMPLE_IDS, TABLE_HEADER, ErrorReport, describe_examples, layer_sizes, make_example,
                            mean_report, relative_errors, run_trial, run_trials, with_knobs, write_table)
from cusppinn.bench import trials as trials_mod
from cusppinn.errors import ConfigurationError, DegenerateSolutionError, DivergenceError
from cusppinn.geometry import NEUMANN, sample_collocation

from symbolic import Oracle

KNOB_CASES = [
    ("ex1", {}), ("ex1", {"x_gamma": 0.6}),
    ("ex2", {}), ("ex2", {"alpha": 0.0, "gamma": 1.0}), ("ex2", {"eta": 1.0, "gamma": 1.0, "alpha": 0.0}),
    ("ex3", {}), ("ex3", {"eta": 1e-4}),
    ("ex4", {}), ("ex4", {"b": 1.0}), ("ex4", {"b": 1000.0}),
    ("ex5", {}), ("ex6", {}), ("ex7", {}),
]


def _points(spec, n=400, seed=0):
    col = sample_collocation(spec.domain, spec.level_set, n, n // 4, n // 4, seed=seed)
    return col


@pytest.mark.parametrize("example_id,knobs", KNOB_CASES)
def test_closed_forms_match_symbolic_oracle(example_id, knobs):
    spec = make_example(example_id, **knobs)
    oracle = Oracle(example_id, **knobs)
    col = _points(spec)
    prob = spec.problem
    for side, s in (("-", -1.0), ("+", 1.0)):
        m = col.interior_sign == s
        x = col.interior[m]
        if not len(x):
            continue
        beta, _, f = prob.sided(x, col.interior_sign[m])
        u = spec.exact(x)
        assert np.allclose(u, oracle.u(x, side), rtol=1e-13, atol=1e-13)
        assert np.allclose(spec.exact_grad(x), oracle.grad(x, side), rtol=1e-12, atol=1e-12)
        assert np.allclose(beta, oracle.beta(x, side), rtol=1e-14)
        assert np.allclose(f, oracle.f(x, side), rtol=1e-10, atol=1e-10 * (1 + np.max(np.abs(f))))
    xg, ng = col.interface, col.interface_normals
    assert np.allclose(prob.rho(xg), oracle.flux_jump(xg, ng), rtol=1e-10, atol=1e-10)
    jump = oracle.jump(xg)
    if prob.lam is None:
        assert np.max(np.abs(jump)) <= 1e-12
    else:
        assert np.allclose(prob.lam(xg), jump, atol=1e-12)


@pytest.mark.parametrize("example_id,knobs", KNOB_CASES)
def test_boundary_data_match_symbolic_oracle(example_id, knobs):
    spec = make_example(example_id, **knobs)
    oracle = Oracle(example_id, **knobs)
    col = _points(spec, seed=1)
    xb, nb, tb = col.boundary, col.boundary_normals, col.boundary_tags
    side = np.where(spec.level_set.phi(xb) < 0, "-", "+")
    expect = np.empty(len(xb))
    for s in "-+":
        m = side == s
        if np.any(m):
            u = oracle.u(xb[m], s)
            dn = np.einsum("ij,ij->i", oracle.grad(xb[m], s), nb[m])
            expect[m] = np.where(tb[m] == NEUMANN, dn, u)
    assert np.allclose(spec.problem.g(xb, tb), expect, rtol=1e-12, atol=1e-12)


def test_ex2_neumann_toggle():
    assert NEUMANN in _points(make_example("ex2")).boundary_tags
    assert NEUMANN not in _points(make_example("ex2", neumann=False)).boundary_tags


def test_quoted_point_budgets():
    assert sum(make_example("ex2", M0=30).counts) == 1110
    assert make_example("ex3", eta=1e4).counts == (1138, 120, 240)
    assert make_example("ex3", eta=1e-4).counts == (2519, 200, 240)
    assert make_example("ex4").counts == (800, 160, 2400)
    assert make_example("ex5").counts == (500, 1064, 1064)
    ex6 = make_example("ex6")
    assert ex6.counts_for((1, 155)) == (2550, 200, 400)
    assert ex6.counts_for((3, 20)) == (3635, 300, 600)
    assert make_example("ex7").counts == (801, 752, 907)


@pytest.mark.parametrize("example_id,arch,n_theta", [
    ("ex2", (1, 40), 200), ("ex4", (1, 40), 240), ("ex4", (2, 12), 228), ("ex4", (3, 9), 234),
    ("ex6", (3, 20), 940),
])
def test_quoted_parameter_counts(example_id, arch, n_theta):
    spec = make_example(example_id)
    assert diffnet.param_count(layer_sizes(spec.dim, arch)) == n_theta


def test_ex4_reference_values():
    for b, v in ((1.0, 9.59e-5), (10.0, 1.01e-4), (1000.0, 1.61e-4)):
        assert make_example("ex4", b=b).reference["iim_rel_linf"] == v


def test_unknown_example_and_knob():
    with pytest.raises(ConfigurationError, match="example"):
        make_example("ex9")
    with pytest.raises(ConfigurationError, match="knobs"):
        make_example("ex2", kappa=3)
    with pytest.raises(ConfigurationError):
        make_example("ex3", eta=-1.0)


def test_describe_examples_lists_all():
    rows = describe_examples()
    assert [r[0] for r in rows] == list(EXAMPLE_IDS) and len(rows) == 7
    assert [r[2] for r in rows] == [1, 2, 2, 3, 6, 2, 3]


def test_with_knobs_rebuilds():
    spec = with_knobs(make_example("ex2"), eta=1.0)
    assert spec.knobs["eta"] == 1.0 and spec.knobs["M0"] == 30


# ---------------------------------------------------------------------------
# metrics


def _peaked(x):
    # unique maximiser at the origin
    return 2.0 - np.sum(x**2, axis=1)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3))
def test_relative_errors_are_homogeneous(c):
    x = np.random.default_rng(0).uniform(-1, 1, size=(200, 2))
    x[0] = 0.0
    rep = relative_errors(lambda y: c * _peaked(y), _peaked, x)
    assert math.isclose(rep.rel_linf, abs(c - 1), rel_tol=1e-12, abs_tol=1e-15)
    assert math.isclose(rep.rel_l2, abs(c - 1), rel_tol=1e-12, abs_tol=1e-15)


def test_relative_errors_single_point_perturbation():
    x = np.random.default_rng(1).uniform(-1, 1, size=(50, 2))
    u = _peaked(x)
    eps = 1e-3
    pred = u.copy()
    pred[7] += eps
    rep = relative_errors(lambda y: pred, _peaked, x)
    assert math.isclose(rep.rel_linf, eps / np.max(np.abs(u)), rel_tol=1e-9)
    assert math.isclose(rep.abs_l2, eps / np.sqrt(50), rel_tol=1e-9)


def test_gradient_error_norm():
    x = np.array([[0.0, 0.0], [1.0, 0.5]])
    exact_g = lambda y: np.array([[1.0, -4.0], [2.0, 1.0]])
    pred_g = lambda y: np.array([[1.5, -4.0], [2.0, 2.0]])
    rep = relative_errors(_peaked, _peaked, x, pred_g, exact_g)
    # mean of per-component maxima: (0.5 + 1) / 2 over (2 + 4) / 2
    assert math.isclose(rep.rel_grad_linf, 0.25)


def test_relative_errors_reject_zero_solution():
    x = np.zeros((3, 2))
    with pytest.raises(DegenerateSolutionError):
        relative_errors(lambda y: np.ones(3), lambda y: np.zeros(3), x)


def test_mean_report_is_arithmetic_mean():
    a = ErrorReport(1.0, 2.0, 3.0, 4.0, 5.0, 100, 1e-8)
    b = ErrorReport(3.0, 4.0, 5.0, 6.0, 7.0, 200, 3e-8)
    m = mean_report([a, b])
    assert (m.rel_linf, m.rel_l2, m.rel_grad_linf, m.abs_linf, m.abs_l2) == (2.0, 3.0, 4.0, 5.0, 6.0)
    assert m.M_test == 150 and math.isclose(m.loss, 2e-8)
    assert ErrorReport.from_dict(a.to_dict()) == a
    assert math.isnan(mean_report([]).rel_linf)


# ---------------------------------------------------------------------------
# trials


def _capture_collocation(monkeypatch):
    seen = []
    real = trials_mod.train_lm

    def spy(problem, col, p0, cfg, mode="phi_abs"):
        seen.append(col)
        return real(problem, col, p0, cfg, mode=mode)

    monkeypatch.setattr(trials_mod, "train_lm", spy)
    return seen


def test_matched_seeds_give_identical_collocation_across_modes(monkeypatch):
    seen = _capture_collocation(monkeypatch)
    spec = make_example("ex2", M0=5)
    for mode in ("phi_abs", "phi", "none"):
        run_trial(spec, arch=(1, 4), config={"max_epochs": 1}, seed=[3, 1], mode=mode, m_test=50)
    a = seen[0]
    for b in seen[1:]:
        assert np.array_equal(a.interior, b.interior)
        assert np.array_equal(a.interface, b.interface)
        assert np.array_equal(a.boundary, b.boundary)


def test_ex1_trial_reaches_threshold():
    t = run_trial(make_example("ex1"), seed=[0, 0])
    assert not t.diverged and t.train.termination == "threshold"
    assert t.errors.M_test == 1000 and t.errors.abs_linf < 1e-5


def test_run_trials_is_deterministic_and_pool_independent():
    spec = make_example("ex1")
    a = run_trials(spec, n_trials=3, base_seed=4, config={"max_epochs": 30})
    b = run_trials(spec, n_trials=3, base_seed=4, config={"max_epochs": 30}, workers=2)
    assert [t.seed for t in a.trials] == [[4, 0], [4, 1], [4, 2]]
    assert [t.errors for t in a.trials] == [t.errors for t in b.trials]
    assert a.mean.rel_linf == np.mean([t.errors.rel_linf for t in a.trials])


def test_diverged_trials_are_recorded(monkeypatch):
    def boom(*args, **kwargs):
        raise DivergenceError("non-finite residual")

    spec = make_example("ex1")
    calls = iter([True, False, False])
    real = trials_mod.train_lm
    monkeypatch.setattr(trials_mod, "train_lm", lambda *a, **k: boom() if next(calls) else real(*a, **k))
    rep = run_trials(spec, n_trials=3, config={"max_epochs": 20}, exclude_diverged=True)
    assert rep.n_diverged == 1 and rep.trials[0].diverged and len(rep.included) == 2
    assert np.isfinite(rep.mean.abs_linf)
    assert rep.to_dict()["n_diverged"] == 1


def test_write_table(tmp_path):
    rep = run_trials(make_example("ex1"), n_trials=1, config={"max_epochs": 5})
    path = write_table([rep], tmp_path / "t.csv")
    rows = list(csv.reader(path.open()))
    assert rows[0] == TABLE_HEADER and len(rows[1]) == len(TABLE_HEADER)
    assert rows[1][:3] == ["ex1", "1", "2"]


def test_trial_argument_errors():
    spec = make_example("ex1")
    with pytest.raises(ConfigurationError):
        run_trial(spec, counts=(10, 0, 2))
    with pytest.raises(ConfigurationError):
        run_trial(spec, mode="phi_sq")
    with pytest.raises(ConfigurationError):
        run_trial(spec, optimizer="lbfgs")
    with pytest.raises(ConfigurationError):
        run_trials(spec, n_trials=0)
    with pytest.raises(ConfigurationError):
        layer_sizes(2, (0, 10))
