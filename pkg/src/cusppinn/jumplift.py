"""Lifting a prescribed solution jump out of an interface problem.

Write ``u = v + w`` with ``v = V`` on Ω− and ``v = 0`` on Ω+.  A shallow
network ``V`` over ``x`` is fitted so that ``V = -λ`` on Γ; then ``w`` has no
jump and solves a problem with modified source, flux jump and boundary data.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import diffnet
from .errors import ConfigurationError, DegeneratePointError, DivergenceError
from .geometry import DIRICHLET
from .optim import LMConfig, levenberg_marquardt
from .problem import NetworkSolution

FORMAT_VERSION = 1


@dataclass(frozen=True)
class JumpLift:
    """Fitted ``V`` together with the jump it carries.

    ``lam`` is kept only for diagnostics; it is ``None`` after loading from
    disk.
    """

    V_params: diffnet.NetworkParams
    fit_loss: float
    lam: Optional[Callable] = None
    fit_points: Optional[np.ndarray] = None
    epochs: int = 0
    termination: str = ""

    def V(self, x):
        return diffnet.forward(self.V_params, np.asarray(x, dtype=np.float64))

    def V_derivatives(self, x):
        """``(V, ∇V, ΔV)`` at a batch of points."""
        x = np.asarray(x, dtype=np.float64)
        n, d = x.shape
        P = np.broadcast_to(np.eye(d), (n, d, d))
        v, first, second = diffnet.directional_jets(self.V_params, x, P, second=True)
        return v, first, second.sum(axis=1)

    def v(self, x, sign):
        """Region rule: ``V`` where ``sign < 0``, zero elsewhere."""
        return np.where(np.asarray(sign) < 0, self.V(x), 0.0)


def fit_jump_network(lam, interface_points, N=100, seed=0, epochs=3000, loss_threshold=1e-14, config=None):
    """Fit ``V`` with one hidden layer of ``N`` neurons so that ``V(x_Γ) = -λ(x_Γ)``.

    The loss is the mean of ``(V(x_Γ) + λ(x_Γ))²`` and is minimised with the
    same LM loop as the main solve.
    """
    x = np.asarray(interface_points, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise ConfigurationError("need at least one interface point", "interface_points")
    m, d = x.shape
    target = -np.asarray(lam(x), dtype=np.float64)
    w = np.sqrt(1.0 / m)
    params = diffnet.init_params((d, int(N), 1), seed)
    P = np.zeros((m, 1, d))
    a0, a1 = np.ones(m), np.zeros((m, 1))

    def res(theta):
        p = params.with_flat(theta)
        return w * (diffnet.forward(p, x) - target)

    def jac(theta):
        v, J = diffnet.functional_jacobian(params.with_flat(theta), x, P, a0, a1)
        return w * (v - target), w * J

    cfg = config or LMConfig(max_epochs=epochs, loss_threshold=loss_threshold)
    theta, losses, _, _, term, _, _ = levenberg_marquardt(res, jac, params.flatten(), cfg)
    if not np.isfinite(losses[-1]) or not np.all(np.isfinite(theta)):
        raise DivergenceError("jump fit produced a non-finite loss")
    return JumpLift(params.with_flat(theta), float(losses[-1]), lam, x, len(losses) - 1, term)


def lift_problem(problem, lift):
    """The continuous-solution problem satisfied by ``w = u - v``.

    On Ω− the source becomes ``f - ∇·(β⁻∇V) + αV``, the flux jump becomes
    ``ρ + β⁻ ∂ₙV`` and boundary data on ∂Ω ∩ Ω− lose the contribution of
    ``V``.  The jump map is cleared.
    """
    if problem.lam is None:
        raise ConfigurationError("problem has no solution jump to lift", "lam")
    ls = problem.level_set
    domain = problem.domain
    f0, rho0, g0 = problem.f_minus, problem.rho, problem.g

    def f_minus(x):
        x = np.asarray(x, dtype=np.float64)
        v, gv, lv = lift.V_derivatives(x)
        div = problem.beta_minus(x) * lv + np.einsum("ij,ij->i", problem.grad_beta_minus(x), gv)
        return f0(x) - div + problem.alpha(x) * v

    def rho(x):
        x = np.asarray(x, dtype=np.float64)
        _, gv, _ = lift.V_derivatives(x)
        gp = ls.grad(x)
        n = gp / np.linalg.norm(gp, axis=1, keepdims=True)
        return rho0(x) + problem.beta_minus(x) * np.einsum("ij,ij->i", n, gv)

    def g(x, tags):
        x = np.asarray(x, dtype=np.float64)
        out = np.array(g0(x, tags), dtype=np.float64)
        inside = ls.phi(x) < 0
        if not np.any(inside):
            return out
        tags = np.asarray(tags)
        v, gv, _ = lift.V_derivatives(x[inside])
        dir_ = tags[inside] == DIRICHLET
        corr = np.empty(v.shape)
        corr[dir_] = v[dir_]
        if np.any(~dir_):
            n = domain.outward_normal(x[inside][~dir_])
            corr[~dir_] = np.einsum("ij,ij->i", n, gv[~dir_])
        out[inside] -= corr
        return out

    return replace(problem, f_minus=f_minus, rho=rho, g=g, lam=None)


class ComposedSolution:
    """``u = v + w`` with ``w(x) = U_w(x, z(x))``; callable on batches."""

    def __init__(self, lift, w_params, level_set, mode="phi_abs"):
        self.lift = lift
        self.w = NetworkSolution(w_params, level_set, mode)
        self.level_set = level_set

    def _sign(self, x):
        ph = self.level_set.phi(x)
        if np.any(ph == 0.0):
            raise DegeneratePointError("point on the interface; evaluate a one-sided limit instead")
        return ph < 0

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = self._sign(x)
        out = self.w.value(x)
        if np.any(inside):
            out[inside] += self.lift.V(x[inside])
        return out

    def grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = self._sign(x)
        out = self.w.grad(x)
        if np.any(inside):
            out[inside] += self.lift.V_derivatives(x[inside])[1]
        return out

    __call__ = value


def compose_solution(lift, w_params, ls, x, mode="phi_abs"):
    """``V(x) + w(x)`` on Ω−, ``w(x)`` on Ω+, for a single point."""
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    return float(ComposedSolution(lift, w_params, ls, mode).value(x[None, :])[0])


def save_lift(path, lift, w_params=None):
    """JSON document with ``V`` and optionally the ``w`` network."""
    doc = {
        "format_version": FORMAT_VERSION,
        "V": diffnet.params_to_dict(lift.V_params),
        "fit_loss": lift.fit_loss,
        "epochs": lift.epochs,
        "termination": lift.termination,
        "w": None if w_params is None else diffnet.params_to_dict(w_params),
    }
    Path(path).write_text(json.dumps(doc))
    return path


def load_lift(path):
    """Inverse of :func:`save_lift`; returns ``(lift, w_params or None)``."""
    doc = json.loads(Path(path).read_text())
    if doc.get("format_version") != FORMAT_VERSION:
        raise ConfigurationError(f"unsupported format {doc.get('format_version')!r}", "format_version")
    lift = JumpLift(diffnet.params_from_dict(doc["V"]), float(doc["fit_loss"]),
                    epochs=int(doc.get("epochs", 0)), termination=doc.get("termination", ""))
    w = None if doc["w"] is None else diffnet.params_from_dict(doc["w"])
    return lift, w
