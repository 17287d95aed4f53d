"""Levenberg–Marquardt training (primary) and Adam (for comparison)."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, asdict
from pathlib import Path

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from .errors import ConfigurationError
from .problem import ResidualPlan

THRESHOLD = "threshold"
EPOCH_CAP = "epoch-cap"
STAGNATION = "stagnation"
DIVERGENCE = "divergence"


class StepFailure(LinAlgError):
    """The damped normal matrix could not be factorised."""


@dataclass
class LMConfig:
    mu0: float = 1e-3
    mu_decrease: float = 1.0 / 3.0
    mu_increase: float = 2.0
    mu_min: float = 1e-12
    mu_max: float = 1e10
    max_epochs: int = 3000
    loss_threshold: float = 1e-10
    max_rejections: int = 20
    geodesic: bool = True
    geodesic_h: float = 0.1
    geodesic_alpha: float = 0.75
    seed: int = 0

    def __post_init__(self):
        if self.geodesic_h <= 0 or self.geodesic_alpha <= 0:
            raise ConfigurationError("must be > 0", "geodesic_h/geodesic_alpha")
        if not 0.0 < self.mu_decrease < 1.0 < self.mu_increase:
            raise ConfigurationError("need 0 < mu_decrease < 1 < mu_increase", "mu_decrease/mu_increase")
        if not 0.0 < self.mu_min <= self.mu0 <= self.mu_max:
            raise ConfigurationError("need 0 < mu_min <= mu0 <= mu_max", "mu0")
        if self.max_epochs < 0:
            raise ConfigurationError("must be >= 0", "max_epochs")
        if self.max_rejections < 1:
            raise ConfigurationError("must be >= 1", "max_rejections")

    def to_dict(self):
        return asdict(self)


@dataclass
class AdamConfig:
    lr: float = 1e-3
    epochs: int = 3000
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    loss_threshold: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0:
            raise ConfigurationError("must be > 0", "lr")
        if self.epochs < 0:
            raise ConfigurationError("must be >= 0", "epochs")

    def to_dict(self):
        return asdict(self)


@dataclass
class TrainReport:
    """Outcome of a training run.

    ``loss_history[0]`` is the initial loss.  Entry ``k`` (k >= 1) is the loss
    after epoch ``k``; for LM ``accepted[k]`` tells whether that epoch took a
    step and ``mu_history[k]`` holds the damping after the update.
    """

    params: object
    loss_history: list
    mu_history: list
    accepted: list
    n_accepted: int
    n_rejected: int
    epochs: int
    termination: str
    seconds: float
    optimizer: str = "lm"
    extra: dict = field(default_factory=dict)

    @property
    def final_loss(self):
        return self.loss_history[-1]

    @property
    def diverged(self):
        return self.termination == DIVERGENCE

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["epoch", "loss", "mu", "accepted"])
            for k, (loss, mu, acc) in enumerate(zip(self.loss_history, self.mu_history, self.accepted)):
                w.writerow([k, repr(float(loss)), "" if mu is None else repr(float(mu)), int(bool(acc))])
        return path


def _normal_matrix(J):
    return J.T @ J


def _factor(A, mu):
    A = A.copy()
    A[np.diag_indices_from(A)] += mu
    try:
        return cho_factor(A, lower=False, check_finite=False)
    except LinAlgError as exc:
        raise StepFailure(str(exc)) from exc


def _solve(c, g):
    delta = -cho_solve(c, g, check_finite=False)
    if not np.all(np.isfinite(delta)):
        raise StepFailure("non-finite step")
    return delta


def _damped_solve(A, g, mu):
    return _solve(_factor(A, mu), g)


def _geodesic_step(residual, theta, r, J, c, delta, cfg):
    # second directional derivative of r along delta by finite differences
    h = cfg.geodesic_h
    r_h = residual(theta + h * delta)
    rvv = (2.0 / h) * ((r_h - r) / h - J @ delta)
    if not np.all(np.isfinite(rvv)):
        return delta
    accel = _solve(c, J.T @ rvv)
    if 2.0 * np.linalg.norm(accel) > cfg.geodesic_alpha * np.linalg.norm(delta):
        return delta
    return delta + 0.5 * accel


def lm_step(r, J, mu):
    """Solve (JᵀJ + μI) δ = -Jᵀr by Cholesky factorisation."""
    J = np.asarray(J, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    if mu < 0 or not np.all(np.isfinite(J)):
        raise StepFailure("need mu >= 0 and a finite Jacobian")
    return _damped_solve(_normal_matrix(J), J.T @ r, mu)


def levenberg_marquardt(residual, jacobian, theta0, config=None, callback=None):
    """Generic LM loop on flat parameter vectors.

    Each attempt solves ``(JᵀJ + μI)δ = -Jᵀr``.  With ``config.geodesic`` the
    step gets the second-order geodesic correction ``a/2`` where
    ``(JᵀJ + μI)a = -Jᵀr_vv`` and ``r_vv`` is the directional second
    derivative of ``r`` along ``δ``; the correction is dropped when
    ``2‖a‖ > geodesic_alpha·‖δ‖``.  For linear residuals ``a = 0``.

    ``residual(θ) -> r`` and ``jacobian(θ) -> (r, J)``.  Returns
    ``(θ, loss_history, mu_history, accepted, termination, n_acc, n_rej)``.
    """
    cfg = config or LMConfig()
    theta = np.array(theta0, dtype=np.float64)
    r = residual(theta)
    loss = float(r @ r)
    losses, mus, acc = [loss], [cfg.mu0], [True]
    if not np.isfinite(loss):
        return theta, losses, mus, acc, DIVERGENCE, 0, 0
    mu = cfg.mu0
    n_acc = n_rej = 0
    term = EPOCH_CAP
    if loss <= cfg.loss_threshold:
        return theta, losses, mus, acc, THRESHOLD, 0, 0
    for epoch in range(1, cfg.max_epochs + 1):
        r, J = jacobian(theta)
        A = _normal_matrix(J)
        g = J.T @ r
        stepped = False
        for _ in range(cfg.max_rejections + 1):
            try:
                c = _factor(A, mu)
                delta = _solve(c, g)
                if cfg.geodesic:
                    with np.errstate(all="ignore"):
                        delta = _geodesic_step(residual, theta, r, J, c, delta, cfg)
                trial = theta + delta
                r_new = residual(trial)
                loss_new = float(r_new @ r_new)
            except StepFailure:
                loss_new = np.inf
            if np.isfinite(loss_new) and loss_new < loss:
                theta, loss = trial, loss_new
                mu = max(mu * cfg.mu_decrease, cfg.mu_min)
                n_acc += 1
                stepped = True
                break
            n_rej += 1
            mu = min(mu * cfg.mu_increase, cfg.mu_max)
        losses.append(loss)
        mus.append(mu)
        acc.append(stepped)
        if callback is not None:
            callback(epoch, loss, mu, stepped)
        if not stepped:
            term = STAGNATION
            break
        if loss <= cfg.loss_threshold:
            term = THRESHOLD
            break
    return theta, losses, mus, acc, term, n_acc, n_rej


def _plan(problem, collocation, mode):
    return problem if isinstance(problem, ResidualPlan) else ResidualPlan(problem, collocation, mode)


def train_lm(problem, collocation, params0, config=None, mode="phi_abs", callback=None):
    """Minimise the PINN loss with Levenberg–Marquardt.

    ``problem`` may also be a prebuilt :class:`ResidualPlan` (then
    ``collocation`` is ignored).
    """
    plan = _plan(problem, collocation, mode)
    cfg = config or LMConfig()
    sizes = params0.layer_sizes

    def res(theta):
        return plan.residual(params0.with_flat(theta))

    def jac(theta):
        return plan.jacobian(params0.with_flat(theta))

    t0 = time.perf_counter()
    theta, losses, mus, acc, term, n_acc, n_rej = levenberg_marquardt(res, jac, params0.flatten(), cfg, callback)
    return TrainReport(
        params=params0.with_flat(theta) if np.all(np.isfinite(theta)) else params0,
        loss_history=losses,
        mu_history=mus,
        accepted=acc,
        n_accepted=n_acc,
        n_rejected=n_rej,
        epochs=len(losses) - 1,
        termination=term,
        seconds=time.perf_counter() - t0,
        optimizer="lm",
        extra={"layer_sizes": list(sizes)},
    )


def adam(loss_and_grad, theta0, config):
    """Full-batch Adam; returns (θ_best_last, losses, termination)."""
    theta = np.array(theta0, dtype=np.float64)
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    loss, g = loss_and_grad(theta)
    losses = [loss]
    if not np.isfinite(loss):
        return theta, losses, DIVERGENCE
    for t in range(1, config.epochs + 1):
        m = config.beta1 * m + (1 - config.beta1) * g
        v = config.beta2 * v + (1 - config.beta2) * g * g
        mh = m / (1 - config.beta1**t)
        vh = v / (1 - config.beta2**t)
        theta = theta - config.lr * mh / (np.sqrt(vh) + config.eps)
        loss, g = loss_and_grad(theta)
        losses.append(loss)
        if not np.isfinite(loss) or not np.all(np.isfinite(g)):
            return theta, losses, DIVERGENCE
        if loss <= config.loss_threshold:
            return theta, losses, THRESHOLD
    return theta, losses, EPOCH_CAP


def train_adam(problem, collocation, params0, lr=1e-3, epochs=3000, seed=0, mode="phi_abs", config=None):
    """Adam on the full-batch loss with gradient 2Jᵀr (computed as a VJP)."""
    cfg = config or AdamConfig(lr=lr, epochs=epochs, seed=seed)
    plan = _plan(problem, collocation, mode)

    def lg(theta):
        return plan.loss_and_grad(params0.with_flat(theta))

    t0 = time.perf_counter()
    theta, losses, term = adam(lg, params0.flatten(), cfg)
    ok = np.all(np.isfinite(theta))
    return TrainReport(
        params=params0.with_flat(theta) if ok else params0,
        loss_history=losses,
        mu_history=[None] * len(losses),
        accepted=[True] * len(losses),
        n_accepted=len(losses) - 1,
        n_rejected=0,
        epochs=len(losses) - 1,
        termination=term,
        seconds=time.perf_counter() - t0,
        optimizer="adam",
        extra={"layer_sizes": list(params0.layer_sizes)},
    )
