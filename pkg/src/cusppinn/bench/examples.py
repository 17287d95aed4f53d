"""Seven manufactured interface problems with closed-form solutions.

Sources, flux jumps and boundary data are written out by hand from the exact
solutions; ``tests/test_bench.py`` re-derives them symbolically.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..errors import ConfigurationError
from ..geometry import (
    NEUMANN,
    Ball,
    Box,
    Flower,
    Interval,
    PointInterface1D,
    SphereLevelSet,
    SphericalShell,
    StarLevelSet,
)
from ..problem import InterfaceProblem, constant, zero_scalar


@dataclass(frozen=True)
class ExampleSpec:
    """A benchmark problem, its exact solution and its default experiment setup.

    ``counts`` is the default ``(M_I, M_Γ, M_B)``; ``counts_by_arch`` overrides
    it for architectures trained on a different point budget.  ``m_test`` of
    ``None`` means 100 test points per training point.
    """

    id: str
    title: str
    problem: InterfaceProblem
    u_minus: Callable
    u_plus: Callable
    grad_minus: Callable
    grad_plus: Callable
    knobs: dict
    counts: tuple
    arch: tuple
    arch_grid: tuple
    loss_threshold: float = 1e-10
    M0: Optional[int] = None
    m_test: Optional[int] = None
    error_kind: str = "relative"
    lift: Optional[dict] = None
    counts_by_arch: dict = field(default_factory=dict)
    reference: dict = field(default_factory=dict)

    @property
    def dim(self):
        return self.problem.dim

    @property
    def level_set(self):
        return self.problem.level_set

    @property
    def domain(self):
        return self.problem.domain

    def exact(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = self.level_set.phi(x) < 0
        out = np.empty(x.shape[0])
        if np.any(inside):
            out[inside] = self.u_minus(x[inside])
        if np.any(~inside):
            out[~inside] = self.u_plus(x[~inside])
        return out

    def exact_grad(self, x):
        x = np.asarray(x, dtype=np.float64)
        inside = self.level_set.phi(x) < 0
        out = np.empty(x.shape)
        if np.any(inside):
            out[inside] = self.grad_minus(x[inside])
        if np.any(~inside):
            out[~inside] = self.grad_plus(x[~inside])
        return out

    def counts_for(self, arch=None):
        arch = tuple(arch) if arch is not None else self.arch
        return tuple(self.counts_by_arch.get(arch, self.counts))

    def n_test(self, counts):
        return self.m_test if self.m_test is not None else 100 * int(sum(counts))


def _r2(x):
    return np.einsum("ij,ij->i", x, x)


def _dirichlet_or_neumann(domain, u, grad):
    def g(x, tags):
        x = np.asarray(x, dtype=np.float64)
        tags = np.asarray(tags)
        out = u(x)
        neu = tags == NEUMANN
        if np.any(neu):
            n = domain.outward_normal(x[neu])
            out[neu] = np.einsum("ij,ij->i", grad(x[neu]), n)
        return out

    return g


def _positive(knobs, name):
    v = float(knobs[name])
    if not v > 0:
        raise ConfigurationError(f"must be > 0, got {v}", name)
    return v


# ---------------------------------------------------------------------------
# ex1: 1-D, kink at x = 1/3


def _ex1(x_gamma=1.0 / 3.0):
    c = float(x_gamma)
    if not 0.0 < c < 1.0:
        raise ConfigurationError("interface must lie inside (0, 1)", "x_gamma")

    def um(x):
        return (c - 1.0) * x[:, 0]

    def up(x):
        return c * (x[:, 0] - 1.0)

    def gm(x):
        return np.full(x.shape, c - 1.0)

    def gp(x):
        return np.full(x.shape, c)

    domain = Interval(0.0, 1.0)
    u = lambda x: np.where(x[:, 0] < c, um(x), up(x))
    prob = InterfaceProblem(
        dim=1, level_set=PointInterface1D(c), domain=domain,
        beta_minus=constant(1.0), beta_plus=constant(1.0),
        f_minus=zero_scalar, f_plus=zero_scalar, rho=constant(1.0),
        g=lambda x, tags: u(np.asarray(x, dtype=np.float64)),
    )
    return ExampleSpec(
        "ex1", "1-D Poisson, derivative jump", prob, um, up, gm, gp, {"x_gamma": c},
        counts=(10, 1, 2), arch=(1, 2), arch_grid=((1, 2),), m_test=1000, error_kind="absolute",
    )


# ---------------------------------------------------------------------------
# ex2: 2-D square, circular interface, piecewise-constant β


def _ex2(alpha=1.0, eta=10.0, gamma=2.0, neumann=True, M0=30):
    knobs = {"alpha": float(alpha), "eta": float(eta), "gamma": float(gamma), "neumann": bool(neumann), "M0": int(M0)}
    eta = _positive(knobs, "eta")
    if knobs["M0"] < 1:
        raise ConfigurationError("must be >= 1", "M0")
    a, gam = knobs["alpha"], knobs["gamma"]

    def phi(x):
        return 4.0 * _r2(x) - 1.0

    def um(x):
        return 1.0 - np.exp(phi(x) / eta)

    def up(x):
        return -gam * np.log(4.0 * _r2(x))

    def gm(x):
        return -(8.0 / eta) * np.exp(phi(x) / eta)[:, None] * x

    def gp(x):
        return -2.0 * gam * x / _r2(x)[:, None]

    def fm(x):
        e = np.exp(phi(x) / eta)
        return -e * (64.0 * _r2(x) / eta + 16.0) - a * (1.0 - e)

    def fp(x):
        return a * gam * np.log(4.0 * _r2(x))

    domain = Box([-1.0, -1.0], [1.0, 1.0], neumann_axes=(1,) if neumann else ())
    prob = InterfaceProblem(
        dim=2, level_set=SphereLevelSet(0.5, 2, scale=4.0), domain=domain,
        beta_minus=constant(eta), beta_plus=constant(1.0), f_minus=fm, f_plus=fp,
        rho=constant(-4.0 * (gam - 1.0)), g=_dirichlet_or_neumann(domain, up, gp), alpha=constant(a),
    )
    m0 = knobs["M0"]
    return ExampleSpec(
        "ex2", "2-D square, circular interface", prob, um, up, gm, gp, knobs,
        counts=(m0 * m0, 3 * m0, 4 * m0), M0=m0, arch=(1, 40),
        arch_grid=tuple((1, n) for n in (20, 30, 40, 50)),
    )


# ---------------------------------------------------------------------------
# ex3: flower domain, high contrast


_EX3_SETUP = {
    "low": ((1138, 120, 240), ((1, 63), (2, 15), (3, 11))),
    "high": ((2519, 200, 240), ((1, 190), (2, 28), (3, 20))),
}


def _ex3(eta=1e4):
    knobs = {"eta": float(eta)}
    eta = _positive(knobs, "eta")
    bm, bp = eta, 1.0
    counts, grid = _EX3_SETUP["low" if eta >= 1.0 else "high"]

    def r(x):
        return np.sqrt(_r2(x))

    def um(x):
        return (r(x) ** 3 - 0.125) / bm

    def up(x):
        return 3.0 * (r(x) ** 3 - 0.125) / bp

    def gm(x):
        return (3.0 / bm) * r(x)[:, None] * x

    def gp(x):
        return (9.0 / bp) * r(x)[:, None] * x

    prob = InterfaceProblem(
        dim=2, level_set=SphereLevelSet(0.5, 2, scale=4.0), domain=Flower(1.0, 0.2, 5),
        beta_minus=constant(bm), beta_plus=constant(bp),
        f_minus=lambda x: 9.0 * r(x), f_plus=lambda x: 27.0 * r(x),
        rho=constant(1.5), g=lambda x, tags: up(np.asarray(x, dtype=np.float64)),
    )
    return ExampleSpec(
        "ex3", "five-fold flower, high contrast", prob, um, up, gm, gp, knobs,
        counts=counts, arch=grid[1], arch_grid=grid,
    )


# ---------------------------------------------------------------------------
# ex4: 3-D cube, variable β inside a sphere

_EX4_IIM = {1.0: 9.59e-5, 10.0: 1.01e-4, 1000.0: 1.61e-4}


def _ex4(b=10.0, r0=0.5):
    knobs = {"b": float(b), "r0": float(r0)}
    b = _positive(knobs, "b")
    r0 = _positive(knobs, "r0")
    if r0 >= 1.0:
        raise ConfigurationError("sphere must fit in the cube", "r0")

    def um(x):
        return _r2(x)

    def up(x):
        s = _r2(x)
        return r0**2 + (0.5 * s * s + s - 0.5 * r0**4 - r0**2) / b

    def gm(x):
        return 2.0 * x

    def gp(x):
        return 2.0 * x * (_r2(x) + 1.0)[:, None] / b

    def f(x):
        return 10.0 * _r2(x) + 6.0

    prob = InterfaceProblem(
        dim=3, level_set=SphereLevelSet(r0, 3), domain=Box([-1.0] * 3, [1.0] * 3),
        beta_minus=lambda x: _r2(x) + 1.0, beta_plus=constant(b), f_minus=f, f_plus=f,
        rho=zero_scalar, g=lambda x, tags: up(np.asarray(x, dtype=np.float64)),
        grad_beta_minus=lambda x: 2.0 * np.asarray(x, dtype=np.float64),
    )
    return ExampleSpec(
        "ex4", "3-D cube, variable coefficient", prob, um, up, gm, gp, knobs,
        counts=(800, 160, 2400), arch=(1, 40), arch_grid=((1, 40), (2, 12), (3, 9)),
        reference={"iim_rel_linf": _EX4_IIM.get(b)},
    )


# ---------------------------------------------------------------------------
# ex5: 6-D ball


def _ex5(dim=6):
    d = int(dim)
    if d < 2:
        raise ConfigurationError("need dim >= 2", "dim")
    k = d - 1  # sin terms in all but the last coordinate

    def s(x):
        return 0.25 - _r2(x)

    def sines(x):
        return np.sin(x[:, :k]).sum(axis=1)

    def cosines(x):
        out = np.zeros(x.shape)
        out[:, :k] = np.cos(x[:, :k])
        return out

    def up(x):
        return np.exp(s(x)) + sines(x)

    def um(x):
        return 1.0 + 2.0 * np.sin(s(x)) + sines(x)

    def gp(x):
        return -2.0 * x * np.exp(s(x))[:, None] + cosines(x)

    def gm(x):
        return -4.0 * x * np.cos(s(x))[:, None] + cosines(x)

    def fp(x):
        return np.exp(s(x)) * (4.0 * _r2(x) - 2.0 * d) - sines(x)

    def fm(x):
        return -8.0 * _r2(x) * np.sin(s(x)) - 4.0 * d * np.cos(s(x)) - sines(x)

    prob = InterfaceProblem(
        dim=d, level_set=SphereLevelSet(0.5, d, scale=4.0), domain=Ball(0.6, d),
        beta_minus=constant(1.0), beta_plus=constant(1.0), f_minus=fm, f_plus=fp,
        rho=constant(1.0), g=lambda x, tags: up(np.asarray(x, dtype=np.float64)),
    )
    return ExampleSpec(
        "ex5", f"{d}-D ball", prob, um, up, gm, gp, {"dim": d},
        counts=(500, 1064, 1064), arch=(1, 40), arch_grid=tuple((1, n) for n in (10, 20, 30, 40)),
    )


# ---------------------------------------------------------------------------
# ex6: 2-D, discontinuous solution

_P4 = 4.0 * np.pi


def _ex6():
    def um(x):
        return np.sin(_P4 * x[:, 0]) * np.sin(_P4 * x[:, 1]) + 7.0

    def up(x):
        return 5.0 * np.exp(-_r2(x))

    def gm(x):
        sx, sy = np.sin(_P4 * x[:, 0]), np.sin(_P4 * x[:, 1])
        cx, cy = np.cos(_P4 * x[:, 0]), np.cos(_P4 * x[:, 1])
        return _P4 * np.column_stack([cx * sy, sx * cy])

    def gp(x):
        return -10.0 * x * np.exp(-_r2(x))[:, None]

    def fm(x):
        return -4.0 * _P4**2 * np.sin(_P4 * x[:, 0]) * np.sin(_P4 * x[:, 1])

    def fp(x):
        return 15.0 * np.exp(-_r2(x)) * (4.0 * _r2(x) - 4.0)

    def rho(x):
        x = np.asarray(x, dtype=np.float64)
        n = x / np.sqrt(_r2(x))[:, None]
        return np.einsum("ij,ij->i", 3.0 * gp(x) - 2.0 * gm(x), n)

    prob = InterfaceProblem(
        dim=2, level_set=SphereLevelSet(2.0 / 3.0, 2, scale=1.0), domain=Box([-1.0, -1.0], [1.0, 1.0]),
        beta_minus=constant(2.0), beta_plus=constant(3.0), f_minus=fm, f_plus=fp, rho=rho,
        g=lambda x, tags: up(np.asarray(x, dtype=np.float64)),
        lam=lambda x: up(np.asarray(x, dtype=np.float64)) - um(np.asarray(x, dtype=np.float64)),
    )
    return ExampleSpec(
        "ex6", "2-D discontinuous solution", prob, um, up, gm, gp, {},
        counts=(2550, 200, 400), arch=(1, 155), arch_grid=((1, 155), (2, 25), (3, 20)),
        counts_by_arch={(3, 20): (3635, 300, 600)}, loss_threshold=1e-12, error_kind="absolute",
        lift={"N": 100, "points": 1000},
    )


# ---------------------------------------------------------------------------
# ex7: 3-D shell around a star-shaped interface


def _ex7():
    ls = StarLevelSet()

    def um(x):
        return np.sin(2 * x[:, 0]) * np.cos(2 * x[:, 1]) * np.exp(x[:, 2])

    def gm(x):
        e = np.exp(x[:, 2])
        return np.column_stack([
            2 * np.cos(2 * x[:, 0]) * np.cos(2 * x[:, 1]) * e,
            -2 * np.sin(2 * x[:, 0]) * np.sin(2 * x[:, 1]) * e,
            np.sin(2 * x[:, 0]) * np.cos(2 * x[:, 1]) * e,
        ])

    def _parts(x):
        t = (x[:, 1] - x[:, 0]) / 3.0
        s = x[:, 0] + x[:, 1] + 3.0
        T = 16 * t**5 - 20 * t**3 + 5 * t
        dT = 80 * t**4 - 60 * t**2 + 5
        d2T = 320 * t**3 - 120 * t
        return t, s, np.log(s), T, dT, d2T

    def up(x):
        _, _, L, T, _, _ = _parts(x)
        return T * L * np.cos(x[:, 2])

    def gp(x):
        _, s, L, T, dT, _ = _parts(x)
        c, sn = np.cos(x[:, 2]), np.sin(x[:, 2])
        return np.column_stack([
            c * (-dT * L / 3.0 + T / s),
            c * (dT * L / 3.0 + T / s),
            -T * L * sn,
        ])

    def lap_p(x):
        _, s, L, T, _, d2T = _parts(x)
        return np.cos(x[:, 2]) * ((2.0 / 9.0) * d2T * L - 2.0 * T / s**2 - T * L)

    def bm(x):
        x = np.asarray(x, dtype=np.float64)
        return 10.0 + (np.sin(_P4 * x[:, 0]) - np.sin(_P4 * x[:, 1])) * np.cos(x[:, 2])

    def gbm(x):
        x = np.asarray(x, dtype=np.float64)
        c = np.cos(x[:, 2])
        return np.column_stack([
            _P4 * np.cos(_P4 * x[:, 0]) * c,
            -_P4 * np.cos(_P4 * x[:, 1]) * c,
            -(np.sin(_P4 * x[:, 0]) - np.sin(_P4 * x[:, 1])) * np.sin(x[:, 2]),
        ])

    def fm(x):
        return bm(x) * (-7.0 * um(x)) + np.einsum("ij,ij->i", gbm(x), gm(x))

    def rho(x):
        x = np.asarray(x, dtype=np.float64)
        g = ls.grad(x)
        n = g / np.linalg.norm(g, axis=1, keepdims=True)
        return np.einsum("ij,ij->i", gp(x) - bm(x)[:, None] * gm(x), n)

    def exact(x):
        x = np.asarray(x, dtype=np.float64)
        return np.where(ls.phi(x) < 0, um(x), up(x))

    prob = InterfaceProblem(
        dim=3, level_set=ls, domain=SphericalShell(0.151, 0.911, 3),
        beta_minus=bm, beta_plus=constant(1.0), f_minus=fm, f_plus=lap_p, rho=rho,
        g=lambda x, tags: exact(x), grad_beta_minus=gbm,
        lam=lambda x: up(np.asarray(x, dtype=np.float64)) - um(np.asarray(x, dtype=np.float64)),
    )
    return ExampleSpec(
        "ex7", "3-D shell, star-shaped interface", prob, um, up, gm, gp, {},
        counts=(801, 752, 907), arch=(1, 100), arch_grid=tuple((1, n) for n in (25, 50, 100)),
        loss_threshold=1e-12, lift={"N": 100, "points": 752},
    )


_BUILDERS = {"ex1": _ex1, "ex2": _ex2, "ex3": _ex3, "ex4": _ex4, "ex5": _ex5, "ex6": _ex6, "ex7": _ex7}
EXAMPLE_IDS = tuple(_BUILDERS)


def make_example(example_id, **knobs):
    """Build an :class:`ExampleSpec`; unknown ids or knobs raise ConfigurationError."""
    try:
        builder = _BUILDERS[example_id]
    except KeyError:
        raise ConfigurationError(f"unknown example {example_id!r}; choose from {EXAMPLE_IDS}", "example") from None
    try:
        return builder(**knobs)
    except TypeError as exc:
        raise ConfigurationError(str(exc), "knobs") from None


def describe_examples():
    """``(id, title, dim, default counts, default arch)`` rows for listings."""
    rows = []
    for k in EXAMPLE_IDS:
        s = make_example(k)
        rows.append((k, s.title, s.dim, s.counts, s.arch))
    return rows
