"""Interface problems, the composite operator and residual assembly.

The network solution is ``u(x) = U(x, z(x))`` where the augmented input ``z``
is ``|φ|`` (``"phi_abs"``, the cusp-capturing default), ``φ`` (``"phi"``) or
absent (``"none"``).  With ``g = ∇z`` the chain rule gives

    ∇·(β∇u) = β (Δ_x U + 2 g·∇_x U_z + |g|² U_zz + U_z Δz) + ∇β·(∇_x U + U_z g).

Assembly rewrites every residual row as a linear functional of the network's
value and of first/second derivatives along a few per-point directions
(``p_k = e_k + g_k e_z`` for the operator) so the parameter Jacobian comes
from a single reverse sweep; see :mod:`cusppinn.diffnet`.

Residual rows are ordered interior, interface, boundary, each in sampler
order, and scaled by ``sqrt(1/M_I)``, ``sqrt(c_Γ/M_Γ)``, ``sqrt(c_B/M_B)`` so
that ``‖r‖²`` is the training loss.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import diffnet
from .errors import ConfigurationError, DegeneratePointError, DivergenceError
from .geometry import DIRICHLET, NEUMANN, augmented_feature, cusp_eval

AUGMENTATIONS = ("phi_abs", "phi", "none")


def zero_scalar(x):
    return np.zeros(np.asarray(x).shape[0])


def zero_vector(x):
    return np.zeros(np.asarray(x).shape)


def constant(c):
    def f(x):
        return np.full(np.asarray(x).shape[0], float(c))

    return f


@dataclass(frozen=True)
class InterfaceProblem:
    """∇·(β∇u) - αu = f in Ω±, ⟦u⟧ = λ (0 if absent), ⟦β∂ₙu⟧ = ρ, boundary data g.

    Coefficient maps take ``(n, d)`` arrays.  ``g(x, tags)`` returns the
    Dirichlet value or the Neumann normal derivative per point.
    """

    dim: int
    level_set: object
    domain: object
    beta_minus: Callable
    beta_plus: Callable
    f_minus: Callable
    f_plus: Callable
    rho: Callable
    g: Callable
    alpha: Callable = zero_scalar
    grad_beta_minus: Callable = zero_vector
    grad_beta_plus: Callable = zero_vector
    lam: Optional[Callable] = None
    c_gamma: float = 1.0
    c_b: float = 1.0

    def __post_init__(self):
        if self.c_gamma <= 0 or self.c_b <= 0:
            raise ConfigurationError("penalty weights must be positive", "c_gamma/c_b")

    def sided(self, x, sign):
        """β, ∇β and f picked per point by region sign."""
        x = np.asarray(x, dtype=np.float64)
        n, d = x.shape
        beta = np.empty(n)
        gbeta = np.empty((n, d))
        f = np.empty(n)
        for s, b, gb, ff in ((-1.0, self.beta_minus, self.grad_beta_minus, self.f_minus),
                             (1.0, self.beta_plus, self.grad_beta_plus, self.f_plus)):
            m = sign == s
            if np.any(m):
                beta[m] = b(x[m])
                gbeta[m] = gb(x[m])
                f[m] = ff(x[m])
        return beta, gbeta, f

    def with_penalties(self, c_gamma=None, c_b=None):
        return replace(self, c_gamma=self.c_gamma if c_gamma is None else c_gamma,
                       c_b=self.c_b if c_b is None else c_b)


def _check_aug(mode):
    if mode not in AUGMENTATIONS:
        raise ConfigurationError(f"unknown augmentation {mode!r}; choose from {AUGMENTATIONS}", "augmentation")


def network_inputs(ls, x, mode="phi_abs"):
    """Stack ``(x, z(x))`` (or just ``x`` for ``"none"``)."""
    _check_aug(mode)
    x = np.asarray(x, dtype=np.float64)
    if mode == "none":
        return x
    z, _, _, _ = augmented_feature(ls, x, mode)
    return np.column_stack([x, z])


# ---------------------------------------------------------------------------
# per-point residuals on jets


def elliptic_operator(jet, cusp, beta, grad_beta):
    """∇·(β∇u) for u = U(x, z(x)) from the jet of U at (x, z(x)).

    ``cusp`` is the ``(z, ∇z, Δz, sign)`` tuple of :func:`cusp_eval`; pass
    ``None`` for a network without augmented input.
    """
    grad_beta = np.asarray(grad_beta, dtype=np.float64)
    if cusp is None:
        lap = np.trace(jet.hess)
        return beta * lap + grad_beta @ jet.grad
    _, gz, lz, _ = cusp
    gz = np.asarray(gz, dtype=np.float64)
    second = jet.lap_x + 2.0 * gz @ jet.grad_x_u_z + (gz @ gz) * jet.u_zz + jet.u_z * lz
    return beta * second + grad_beta @ (jet.grad_x + jet.u_z * gz)


def _side(problem, x, sign):
    beta, gbeta, f = problem.sided(x[None, :], np.array([sign]))
    return beta[0], gbeta[0], f[0], problem.alpha(x[None, :])[0]


def _point(x, d):
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    if x.shape != (d,):
        raise ConfigurationError(f"point of shape {x.shape} for a {d}-D problem")
    return x


def interior_residual_jet(jet, x, problem, mode="phi_abs"):
    """L_I from a jet already evaluated at (x, z(x))."""
    x = _point(x, problem.dim)
    ls = problem.level_set
    if mode == "none":
        cusp = None
        sign = 1.0 if ls.phi(x[None, :])[0] > 0 else -1.0
    elif mode == "phi_abs":
        cusp = cusp_eval(ls, x)
        sign = cusp[3]
    else:
        ph = ls.phi(x[None, :])[0]
        if ph == 0.0:
            raise DegeneratePointError("interior point on the interface")
        sign = 1.0 if ph > 0 else -1.0
        cusp = (ph, ls.grad(x[None, :])[0], ls.lap(x[None, :])[0], sign)
    beta, gbeta, f, alpha = _side(problem, x, sign)
    return elliptic_operator(jet, cusp, beta, gbeta) - alpha * jet.value - f


def _grad_norm(ls, x):
    gn = np.linalg.norm(ls.grad(x[None, :])[0])
    if gn <= 0.0:
        raise DegeneratePointError("vanishing level-set gradient on the interface")
    return gn


def _betas(problem, x):
    return problem.beta_minus(x[None, :])[0], problem.beta_plus(x[None, :])[0]


def interface_residual_jet(jet, x_gamma, normal, problem, mode="phi_abs"):
    """L_Γ from the jet at (x_Γ, 0).

    ``"phi_abs"``: ⟦β⟧ ∇_xU·n + (β⁺+β⁻) U_z |∇φ| - ρ.  The other modes use the
    smooth-solution form ⟦β⟧ ∂ₙu - ρ.
    """
    x = _point(x_gamma, problem.dim)
    n = np.asarray(normal, dtype=np.float64)
    bm, bp = _betas(problem, x)
    rho = problem.rho(x[None, :])[0]
    if mode == "none":
        return (bp - bm) * (jet.grad @ n) - rho
    gn = _grad_norm(problem.level_set, x)
    if mode == "phi":
        return (bp - bm) * (jet.grad_x @ n + jet.u_z * gn) - rho
    return (bp - bm) * (jet.grad_x @ n) + (bp + bm) * jet.u_z * gn - rho


def boundary_residual_jet(jet, x_b, normal, tag, problem, mode="phi_abs"):
    """Dirichlet: U - g.  Neumann: (∇_xU + U_z ∇z)·n - g."""
    x = _point(x_b, problem.dim)
    if tag not in (DIRICHLET, NEUMANN):
        raise ConfigurationError(f"unknown boundary tag {tag!r}", "bc_tag")
    gval = problem.g(x[None, :], np.array([tag]))[0]
    if tag == DIRICHLET:
        return jet.value - gval
    n = np.asarray(normal, dtype=np.float64)
    if mode == "none":
        return jet.grad @ n - gval
    _, gz, _, _ = augmented_feature(problem.level_set, x[None, :], mode)
    return (jet.grad_x + jet.u_z * gz[0]) @ n - gval


def _interface_input(x, mode):
    return x if mode == "none" else np.append(x, 0.0)


def interior_residual(params, x, problem, mode="phi_abs"):
    x = _point(x, problem.dim)
    jet = diffnet.forward_jet(params, network_inputs(problem.level_set, x[None, :], mode)[0])
    return interior_residual_jet(jet, x, problem, mode)


def interface_residual(params, x_gamma, normal, problem):
    """Cusp-capturing interface residual (network fed with |φ|)."""
    x = _point(x_gamma, problem.dim)
    jet = diffnet.forward_jet(params, _interface_input(x, "phi_abs"))
    return interface_residual_jet(jet, x, normal, problem, "phi_abs")


def interface_residual_smooth(params, x_gamma, normal, problem):
    """Interface residual for a network fed with the smooth φ.

    With ⟦β⟧ = 0 this is identically -ρ whatever the parameters.
    """
    x = _point(x_gamma, problem.dim)
    jet = diffnet.forward_jet(params, _interface_input(x, "phi"))
    return interface_residual_jet(jet, x, normal, problem, "phi")


def boundary_residual(params, x_b, normal, tag, problem, mode="phi_abs"):
    x = _point(x_b, problem.dim)
    jet = diffnet.forward_jet(params, network_inputs(problem.level_set, x[None, :], mode)[0])
    return boundary_residual_jet(jet, x, normal, tag, problem, mode)


# ---------------------------------------------------------------------------
# batched assembly


@dataclass
class ResidualBlock:
    """Rows ``w·(a0 U + Σ a1_k D_k U + Σ a2_k D²_k U - target)`` on ``inputs``."""

    name: str
    inputs: np.ndarray
    dirs: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    a2: Optional[np.ndarray]
    target: np.ndarray
    weight: float

    @property
    def size(self):
        return self.inputs.shape[0]

    def values(self, params):
        v = diffnet.functional_values(params, self.inputs, self.dirs, self.a0, self.a1, self.a2)
        return self.weight * (v - self.target)

    def jacobian(self, params):
        v, jac = diffnet.functional_jacobian(params, self.inputs, self.dirs, self.a0, self.a1, self.a2)
        return self.weight * (v - self.target), self.weight * jac

    def vjp(self, params, cot):
        v, g = diffnet.functional_vjp(params, self.inputs, self.dirs, self.a0, self.a1, self.a2, cot)
        return self.weight * (v - self.target), self.weight * g


def interior_block(problem, x, sign, mode="phi_abs", weight=1.0):
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    beta, gbeta, f = problem.sided(x, sign)
    alpha = problem.alpha(x)
    if mode == "none":
        P = np.broadcast_to(np.eye(d), (n, d, d)).copy()
        a1 = gbeta.copy()
        a2 = np.repeat(beta[:, None], d, axis=1)
        inputs = x
    else:
        z, gz, lz, _ = augmented_feature(problem.level_set, x, mode)
        P = np.zeros((n, d + 1, d + 1))
        P[:, np.arange(d), np.arange(d)] = 1.0
        P[:, :d, d] = gz
        P[:, d, d] = 1.0
        a1 = np.column_stack([gbeta, beta * lz])
        a2 = np.column_stack([np.repeat(beta[:, None], d, axis=1), np.zeros(n)])
        inputs = np.column_stack([x, z])
    return ResidualBlock("interior", inputs, P, -alpha, a1, a2, f, weight)


def interface_block(problem, x, normals, mode="phi_abs", weight=1.0):
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    bm, bp = problem.beta_minus(x), problem.beta_plus(x)
    jump = bp - bm
    rho = problem.rho(x)
    if mode == "none":
        dirs = (jump[:, None] * normals)[:, None, :]
        inputs = x
    else:
        gn = np.linalg.norm(problem.level_set.grad(x), axis=1)
        if np.any(gn <= 0.0):
            raise DegeneratePointError("vanishing level-set gradient on the interface")
        zc = (bp + bm) * gn if mode == "phi_abs" else jump * gn
        dirs = np.column_stack([jump[:, None] * normals, zc])[:, None, :]
        inputs = np.column_stack([x, np.zeros(n)])
    return ResidualBlock("interface", inputs, dirs, np.zeros(n), np.ones((n, 1)), None, rho, weight)


def boundary_block(problem, x, normals, tags, mode="phi_abs", weight=1.0):
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    tags = np.asarray(tags)
    bad = ~np.isin(tags, (DIRICHLET, NEUMANN))
    if np.any(bad):
        raise ConfigurationError(f"unknown boundary tag {tags[bad][0]!r}", "bc_tag")
    neu = tags == NEUMANN
    target = problem.g(x, tags)
    if mode == "none":
        inputs = x
        dirs = np.where(neu[:, None], normals, 0.0)[:, None, :]
    else:
        z, gz, _, _ = augmented_feature(problem.level_set, x, mode)
        inputs = np.column_stack([x, z])
        full = np.column_stack([normals, np.einsum("ij,ij->i", gz, normals)])
        dirs = np.where(neu[:, None], full, 0.0)[:, None, :]
    a0 = np.where(neu, 0.0, 1.0)
    a1 = np.where(neu, 1.0, 0.0)[:, None]
    return ResidualBlock("boundary", inputs, dirs, a0, a1, None, target, weight)


@dataclass(frozen=True)
class ResidualSystem:
    """Weighted residual vector, its θ-Jacobian and row ranges per block."""

    r: np.ndarray
    J: Optional[np.ndarray]
    slices: dict

    @property
    def loss(self):
        return float(self.r @ self.r)

    def to_csv(self, path):
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["row", "block", "residual"])
            for name, sl in self.slices.items():
                for i in range(sl.start, sl.stop):
                    w.writerow([i, name, repr(float(self.r[i]))])
        return path

    def save_jacobian(self, path):
        """Dense ``.npy`` matrix, rows in residual order."""
        np.save(path, self.J)
        return path


class ResidualPlan:
    """Residual rows precomputed for a fixed problem and collocation set.

    Problem data (coefficients, directions, targets) are evaluated once; each
    call only runs the network.
    """

    def __init__(self, problem, collocation, mode="phi_abs"):
        _check_aug(mode)
        self.problem = problem
        self.mode = mode
        c = collocation
        self.blocks = []
        if c.M_I:
            self.blocks.append(interior_block(problem, c.interior, c.interior_sign, mode, np.sqrt(1.0 / c.M_I)))
        if c.M_gamma:
            self.blocks.append(interface_block(problem, c.interface, c.interface_normals, mode,
                                               np.sqrt(problem.c_gamma / c.M_gamma)))
        if c.M_B:
            self.blocks.append(boundary_block(problem, c.boundary, c.boundary_normals, c.boundary_tags, mode,
                                              np.sqrt(problem.c_b / c.M_B)))
        self.slices = {}
        start = 0
        for b in self.blocks:
            self.slices[b.name] = slice(start, start + b.size)
            start += b.size
        self.n_rows = start

    def n_inputs(self):
        return self.blocks[0].inputs.shape[1]

    def residual(self, params):
        return np.concatenate([b.values(params) for b in self.blocks])

    def jacobian(self, params):
        rs, js = zip(*(b.jacobian(params) for b in self.blocks))
        return np.concatenate(rs), np.vstack(js)

    def loss_and_grad(self, params):
        """Loss ‖r‖² and its θ-gradient 2Jᵀr via one forward and one VJP sweep."""
        r = self.residual(params)
        g = np.zeros(params.n_params)
        for b in self.blocks:
            sl = self.slices[b.name]
            _, gb = b.vjp(params, 2.0 * r[sl])
            g += gb
        return float(r @ r), g

    def system(self, params, with_jacobian=True):
        if with_jacobian:
            r, J = self.jacobian(params)
        else:
            r, J = self.residual(params), None
        if not np.all(np.isfinite(r)):
            raise DivergenceError("non-finite residual")
        return ResidualSystem(r, J, dict(self.slices))


def assemble(params, collocation, problem, mode="phi_abs"):
    """Weighted residual vector and exact Jacobian for the PINN loss."""
    return ResidualPlan(problem, collocation, mode).system(params)


def direct_loss(params, collocation, problem, mode="phi_abs"):
    """Three-term mean-squared loss evaluated row by row with the per-point API."""
    c = collocation
    li = [interior_residual(params, x, problem, mode) for x in c.interior]
    if mode == "phi_abs":
        lg = [interface_residual(params, x, n, problem) for x, n in zip(c.interface, c.interface_normals)]
    else:
        lg = [interface_residual_jet(diffnet.forward_jet(params, _interface_input(x, mode)), x, n, problem, mode)
              for x, n in zip(c.interface, c.interface_normals)]
    lb = [boundary_residual(params, x, n, t, problem, mode)
          for x, n, t in zip(c.boundary, c.boundary_normals, c.boundary_tags)]
    total = 0.0
    if li:
        total += np.mean(np.square(li))
    if lg:
        total += problem.c_gamma * np.mean(np.square(lg))
    if lb:
        total += problem.c_b * np.mean(np.square(lb))
    return float(total)


class NetworkSolution:
    """Evaluate ``u(x) = U(x, z(x))`` and ``∇u`` off the interface."""

    def __init__(self, params, level_set, mode="phi_abs"):
        _check_aug(mode)
        self.params = params
        self.level_set = level_set
        self.mode = mode

    def _dirs(self, x):
        n, d = x.shape
        if self.mode == "none":
            return x, np.broadcast_to(np.eye(d), (n, d, d))
        z, gz, _, _ = augmented_feature(self.level_set, x, self.mode)
        P = np.zeros((n, d, d + 1))
        P[:, np.arange(d), np.arange(d)] = 1.0
        P[:, :, d] = gz
        return np.column_stack([x, z]), P

    def value(self, x):
        x = np.asarray(x, dtype=np.float64)
        return diffnet.forward(self.params, network_inputs(self.level_set, x, self.mode))

    def grad(self, x):
        """Row k of the result is ``∂_k U + U_z ∂_k z``."""
        x = np.asarray(x, dtype=np.float64)
        inputs, P = self._dirs(x)
        _, first, _ = diffnet.directional_jets(self.params, inputs, P, second=False)
        return first

    __call__ = value
