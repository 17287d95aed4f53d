import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cusppinn import diffnet, optim
from cusppinn.bench import make_example
from cusppinn.errors import ConfigurationError
from cusppinn.geometry import sample_collocation
from cusppinn.optim import AdamConfig, LMConfig, StepFailure, lm_step
from cusppinn.problem import ResidualPlan


def test_lm_step_hand_examples():
    J, r = np.eye(2), np.array([1.0, 2.0])
    assert np.allclose(lm_step(r, J, 0.0), [-1.0, -2.0])
    assert np.allclose(lm_step(r, J, 1.0), [-0.5, -1.0])


@settings(max_examples=30, deadline=None)
@given(m=st.integers(3, 12), n=st.integers(1, 6), mu=st.floats(1e-6, 1e3), seed=st.integers(0, 10_000))
def test_lm_step_solves_damped_normal_equations(m, n, mu, seed):
    rng = np.random.default_rng(seed)
    J, r = rng.normal(size=(m, n)), rng.normal(size=m)
    d = lm_step(r, J, mu)
    res = (J.T @ J + mu * np.eye(n)) @ d + J.T @ r
    assert np.linalg.norm(res) <= 1e-9 * (1 + np.linalg.norm(J.T @ r))


def test_lm_step_large_damping_is_scaled_gradient_descent():
    rng = np.random.default_rng(0)
    J, r = rng.normal(size=(8, 3)), rng.normal(size=8)
    mu = 1e8
    assert np.allclose(lm_step(r, J, mu), -J.T @ r / mu, rtol=1e-6)


def test_lm_step_rejects_bad_input():
    with pytest.raises(StepFailure):
        lm_step(np.ones(2), np.eye(2), -1.0)
    with pytest.raises(StepFailure):
        lm_step(np.ones(2), np.array([[np.nan, 0], [0, 1]]), 1.0)
    # singular with mu = 0
    with pytest.raises(StepFailure):
        lm_step(np.ones(2), np.zeros((2, 2)), 0.0)


def _linear(seed=0, m=20, n=5):
    rng = np.random.default_rng(seed)
    A, b = rng.normal(size=(m, n)), rng.normal(size=m)
    x_star = np.linalg.lstsq(A, b, rcond=None)[0]
    return A, b, x_star


@pytest.mark.parametrize("geodesic", [True, False])
def test_lm_solves_linear_least_squares(geodesic):
    A, b, x_star = _linear()
    cfg = LMConfig(max_epochs=5, loss_threshold=0.0, geodesic=geodesic)
    theta, losses, mus, acc, term, n_acc, n_rej = optim.levenberg_marquardt(
        lambda t: A @ t - b, lambda t: (A @ t - b, A), np.zeros(5), cfg)
    assert np.allclose(theta, x_star, atol=1e-8)
    r_star = A @ x_star - b
    assert np.isclose(losses[-1], r_star @ r_star, rtol=1e-10)


def test_lm_schedule_on_rosenbrock():
    def res(t):
        return np.array([10 * (t[1] - t[0] ** 2), 1 - t[0]])

    def jac(t):
        return res(t), np.array([[-20 * t[0], 10.0], [-1.0, 0.0]])

    cfg = LMConfig(max_epochs=200, loss_threshold=1e-24)
    theta, losses, mus, acc, term, n_acc, n_rej = optim.levenberg_marquardt(res, jac, np.array([-1.2, 1.0]), cfg)
    assert term == optim.THRESHOLD and np.allclose(theta, 1.0, atol=1e-10)
    assert all(b <= a for a, b in zip(losses, losses[1:]))
    # an accepted epoch after j rejections moves mu by 2**j / 3
    assert mus[0] == cfg.mu0
    assert n_acc == len(losses) - 1
    for a, b in zip(mus, mus[1:]):
        j = np.log2(3 * b / a)
        assert abs(j - round(j)) < 1e-9 and round(j) >= 0


def test_lm_stagnation_after_max_rejections():
    # a residual that gets worse in every direction from the start
    calls = []

    def res(t):
        calls.append(1)
        return np.array([1.0 + 100 * float(t @ t) * (len(calls) > 1)])

    cfg = LMConfig(max_rejections=3, geodesic=False)
    _, losses, mus, acc, term, n_acc, n_rej = optim.levenberg_marquardt(
        res, lambda t: (res(t), np.array([[1.0, 0.0]])), np.zeros(2), cfg)
    assert term == optim.STAGNATION and n_rej == 4 and n_acc == 0
    assert np.isclose(mus[-1], cfg.mu0 * 2**4)
    assert acc == [True, False]


def test_lm_stops_on_non_finite_initial_loss():
    out = optim.levenberg_marquardt(lambda t: np.array([np.nan]), None, np.zeros(1))
    assert out[4] == optim.DIVERGENCE


@pytest.mark.parametrize("kwargs", [dict(mu0=0.0), dict(mu_decrease=1.5), dict(mu_increase=0.5),
                                    dict(max_rejections=0), dict(max_epochs=-1), dict(geodesic_h=0.0)])
def test_lm_config_validation(kwargs):
    with pytest.raises(ConfigurationError):
        LMConfig(**kwargs)


def _small_case(mode="phi_abs"):
    spec = make_example("ex1")
    col = sample_collocation(spec.domain, spec.level_set, 20, 1, 2, seed=0)
    p0 = diffnet.init_params((2, 6, 1) if mode != "none" else (1, 6, 1), 0)
    return spec, col, p0


def test_train_lm_is_monotone_and_deterministic():
    spec, col, p0 = _small_case()
    cfg = LMConfig(max_epochs=40, loss_threshold=1e-10)
    a = optim.train_lm(spec.problem, col, p0, cfg)
    b = optim.train_lm(spec.problem, col, p0, cfg)
    assert np.array_equal(a.params.flatten(), b.params.flatten())
    assert a.loss_history == b.loss_history
    assert all(y <= x for x, y in zip(a.loss_history, a.loss_history[1:]))
    assert a.final_loss < 1e-3 * a.loss_history[0]
    assert a.epochs == len(a.loss_history) - 1


def test_train_lm_history_csv(tmp_path):
    spec, col, p0 = _small_case()
    rep = optim.train_lm(spec.problem, col, p0, LMConfig(max_epochs=3))
    lines = rep.to_csv(tmp_path / "h.csv").read_text().splitlines()
    assert lines[0] == "epoch,loss,mu,accepted"
    assert len(lines) == 2 + rep.epochs


def test_adam_first_step_is_signed_learning_rate():
    g0 = np.array([3.0, -0.5, 1e-3])

    def lg(t):
        return float(t @ t), g0 if np.all(t == 0) else 2 * t

    theta, losses, term = optim.adam(lg, np.zeros(3), AdamConfig(lr=0.01, epochs=1))
    assert np.allclose(theta, -0.01 * np.sign(g0), rtol=1e-4)
    assert term == optim.EPOCH_CAP and len(losses) == 2


def test_train_adam_reduces_loss_and_uses_exact_gradient():
    spec, col, p0 = _small_case()
    plan = ResidualPlan(spec.problem, col)
    loss, g = plan.loss_and_grad(p0)
    theta, h = p0.flatten(), 1e-6
    fd = [(plan.loss_and_grad(p0.with_flat(theta + h * e))[0] - plan.loss_and_grad(p0.with_flat(theta - h * e))[0])
          / (2 * h) for e in np.eye(theta.size)]
    assert np.allclose(g, fd, rtol=1e-6, atol=1e-9)
    rep = optim.train_adam(plan, None, p0, lr=1e-2, epochs=200)
    assert rep.optimizer == "adam" and rep.final_loss < loss
