"""Implicit interfaces, computational domains and collocation sampling.

Level sets and domains are vectorised: every method takes an ``(n, d)``
array of points.  The interface is ``Γ = {φ = 0}`` with ``Ω- = {φ < 0}`` and
``Ω+ = {φ > 0}``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.spatial.transform import Rotation
from scipy.stats import qmc

from .errors import ConfigurationError, DegeneratePointError, GeometryError

INTERFACE_BAND = 1e-12
DIRICHLET = "dirichlet"
NEUMANN = "neumann"
BC_TAGS = (DIRICHLET, NEUMANN)

_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def _pts(x, d):
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1 and d == 1 and x.shape[0] != 1:
        x = x[:, None]
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != d:
        raise ConfigurationError(f"points of dimension {x.shape[1]} for a {d}-D geometry")
    return x


def _rng(seed):
    return seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)


# ---------------------------------------------------------------------------
# level sets


class LevelSet:
    """Analytic level set with gradient, Laplacian and an interface sampler."""

    dim: int

    def phi(self, x):
        raise NotImplementedError

    def grad(self, x):
        raise NotImplementedError

    def lap(self, x):
        raise NotImplementedError

    def sign(self, x):
        return np.sign(self.phi(x))

    def sample(self, n, rng):
        """``n`` points on Γ (not necessarily projected to 1e-10 yet)."""
        raise NotImplementedError

    def project(self, x, max_iter=50, tol=1e-13):
        """Newton projection onto φ = 0 along the gradient."""
        x = np.array(_pts(x, self.dim))
        for _ in range(max_iter):
            ph = self.phi(x)
            if np.all(np.abs(ph) <= tol):
                return x
            g = self.grad(x)
            x = x - (ph / np.einsum("ij,ij->i", g, g))[:, None] * g
        if np.all(np.abs(self.phi(x)) <= 1e-10):
            return x
        raise GeometryError("Newton projection onto the interface did not converge in 50 iterations")


class PointInterface1D(LevelSet):
    """φ(x) = x - c on the real line; Γ is the single point c."""

    def __init__(self, c):
        self.c = float(c)
        self.dim = 1

    def phi(self, x):
        return _pts(x, 1)[:, 0] - self.c

    def grad(self, x):
        return np.ones_like(_pts(x, 1))

    def lap(self, x):
        return np.zeros(_pts(x, 1).shape[0])

    def sample(self, n, rng):
        return np.full((n, 1), self.c)


class SphereLevelSet(LevelSet):
    """φ(x) = scale·(|x - center|² - R²).

    ``scale = 1/R²`` gives the normalised form ``(|x|/R)² - 1`` used for
    Examples 2-5; ``scale = 1`` the plain form of Example 6.
    """

    def __init__(self, radius, dim, scale=None, center=None):
        self.radius = float(radius)
        self.dim = int(dim)
        self.scale = 1.0 / self.radius**2 if scale is None else float(scale)
        self.center = np.zeros(self.dim) if center is None else np.asarray(center, dtype=np.float64)

    def phi(self, x):
        y = _pts(x, self.dim) - self.center
        return self.scale * (np.einsum("ij,ij->i", y, y) - self.radius**2)

    def grad(self, x):
        return 2.0 * self.scale * (_pts(x, self.dim) - self.center)

    def lap(self, x):
        return np.full(_pts(x, self.dim).shape[0], 2.0 * self.scale * self.dim)

    def sample(self, n, rng):
        return self.center + self.radius * sphere_directions(n, self.dim, rng)


class StarLevelSet(LevelSet):
    """Star-shaped 3-D surface r = r0 (1 + sin⁴ϑ Σ a_k cos(n_k(ψ - θ_k))).

    φ = |x| - r0 (1 + s² A(ψ)) with s = (x² + y²)/|x|² and ψ the azimuth
    ``atan2(y, x)``.
    """

    def __init__(self, r0=0.483, a=(0.1, -0.1, 0.15), n=(3, 4, 7), theta=(0.5, 1.8, 0.0)):
        self.r0 = float(r0)
        self.a = np.asarray(a, dtype=np.float64)
        self.n = np.asarray(n, dtype=np.float64)
        self.theta = np.asarray(theta, dtype=np.float64)
        self.dim = 3

    def _angular(self, psi):
        arg = self.n[None, :] * (psi[:, None] - self.theta[None, :])
        A = np.cos(arg) @ self.a
        dA = -np.sin(arg) @ (self.a * self.n)
        d2A = -np.cos(arg) @ (self.a * self.n**2)
        return A, dA, d2A

    def radius_of(self, dirs):
        """Surface radius along unit directions."""
        dirs = _pts(dirs, 3)
        s = (dirs[:, 0] ** 2 + dirs[:, 1] ** 2) / np.einsum("ij,ij->i", dirs, dirs)
        A, _, _ = self._angular(np.arctan2(dirs[:, 1], dirs[:, 0]))
        return self.r0 * (1.0 + s**2 * A)

    def phi(self, x):
        x = _pts(x, 3)
        r = np.linalg.norm(x, axis=1)
        return r - self.radius_of(x)

    def grad(self, x):
        x = _pts(x, 3)
        r2 = np.einsum("ij,ij->i", x, x)
        r = np.sqrt(r2)
        rho2 = x[:, 0] ** 2 + x[:, 1] ** 2
        s = rho2 / r2
        A, dA, _ = self._angular(np.arctan2(x[:, 1], x[:, 0]))
        z2 = x[:, 2] ** 2
        ds = np.stack([2 * x[:, 0] * z2, 2 * x[:, 1] * z2, -2 * x[:, 2] * rho2], axis=1) / r2[:, None] ** 2
        # s² ∇A = s² A'(ψ) (-y, x, 0)/ρ² with s²/ρ² = ρ²/r⁴
        dpsi = np.stack([-x[:, 1], x[:, 0], np.zeros_like(r)], axis=1) * (rho2 / r2**2)[:, None]
        return x / r[:, None] - self.r0 * ((2 * s * A)[:, None] * ds + dA[:, None] * dpsi)

    def lap(self, x):
        x = _pts(x, 3)
        r2 = np.einsum("ij,ij->i", x, x)
        r = np.sqrt(r2)
        st2 = (x[:, 0] ** 2 + x[:, 1] ** 2) / r2
        ct2 = 1.0 - st2
        A, _, d2A = self._angular(np.arctan2(x[:, 1], x[:, 0]))
        ang = 4.0 * A * (4.0 * st2 * ct2 - st2**2) + st2 * d2A
        return 2.0 / r - self.r0 * ang / r2

    def sample(self, n, rng):
        dirs = sphere_directions(n, 3, rng)
        return self.project_along_rays(dirs)

    def project_along_rays(self, dirs, max_iter=50):
        """Newton iteration for t with φ(t·d) = 0 along each ray."""
        t = np.full(dirs.shape[0], self.r0)
        for _ in range(max_iter):
            x = t[:, None] * dirs
            ph = self.phi(x)
            if np.all(np.abs(ph) <= 1e-14):
                return x
            dphi = np.einsum("ij,ij->i", self.grad(x), dirs)
            t = t - ph / dphi
        x = t[:, None] * dirs
        if np.all(np.abs(self.phi(x)) <= 1e-10):
            return x
        raise GeometryError("Newton projection onto the star surface did not converge")


def sphere_directions(n, dim, rng):
    """Quasi-uniform unit vectors in R^dim.

    d=1: alternating ±1; d=2: stratified angles; d=3: jittered Fibonacci
    lattice under a random rotation; d>=4: normalised Gaussians.
    """
    rng = _rng(rng)
    if dim == 1:
        return np.where(np.arange(n) % 2 == 0, 1.0, -1.0)[:, None]
    if dim == 2:
        t = 2 * np.pi * (rng.permutation(n) + rng.random(n)) / n
        return np.stack([np.cos(t), np.sin(t)], axis=1)
    if dim == 3:
        i = np.arange(n)
        h = 1.0 - 2.0 * (i + rng.random(n)) / n
        rad = np.sqrt(np.clip(1.0 - h * h, 0.0, None))
        ang = i * _GOLDEN_ANGLE
        p = np.stack([rad * np.cos(ang), rad * np.sin(ang), h], axis=1)
        p = Rotation.random(random_state=rng).apply(p)
        return p / np.linalg.norm(p, axis=1, keepdims=True)
    g = rng.standard_normal((n, dim))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def cusp_eval(ls, x):
    """(|φ|, sign(φ)∇φ, sign(φ)Δφ, sign(φ)) at a single off-interface point."""
    x = _pts(x, ls.dim)
    ph = ls.phi(x)[0]
    if ph == 0.0:
        raise DegeneratePointError("point lies on the interface; use interface formulas")
    s = 1.0 if ph > 0 else -1.0
    return abs(ph), s * ls.grad(x)[0], s * ls.lap(x)[0], s


def augmented_feature(ls, x, mode):
    """Batch version of the augmented input: (z, ∇z, Δz, sign).

    ``mode`` is ``"phi_abs"`` (z = |φ|), ``"phi"`` (z = φ) or ``"none"``.
    For ``"none"`` the feature arrays are ``None``.
    """
    x = _pts(x, ls.dim)
    ph = ls.phi(x)
    s = np.where(ph > 0, 1.0, -1.0)
    if mode == "none":
        return None, None, None, s
    g = ls.grad(x)
    lp = ls.lap(x)
    if mode == "phi_abs":
        return np.abs(ph), s[:, None] * g, s * lp, s
    if mode == "phi":
        return ph, g, lp, s
    raise ConfigurationError(f"unknown augmentation {mode!r}", "augmentation")


def unit_normal(ls, x_gamma):
    """∇φ/|∇φ| (pointing from Ω- to Ω+), single point or batch."""
    x = np.asarray(x_gamma, dtype=np.float64)
    single = x.ndim == 1 and not (ls.dim == 1 and x.shape[0] != 1)
    g = ls.grad(_pts(x, ls.dim))
    nrm = np.linalg.norm(g, axis=1)
    if np.any(nrm <= 0.0) or not np.all(np.isfinite(nrm)):
        raise DegeneratePointError("vanishing level-set gradient on the interface")
    n = g / nrm[:, None]
    return n[0] if single else n


def latin_hypercube(n, box, seed):
    """``n`` Latin-hypercube points in the box ``(lo, hi)``."""
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=np.float64)) for b in box)
    if n < 1:
        raise ConfigurationError("n must be >= 1", "n")
    if lo.shape != hi.shape or np.any(hi <= lo):
        raise ConfigurationError("invalid bounds", "box")
    u = qmc.LatinHypercube(d=lo.shape[0], seed=_rng(seed)).random(n)
    return lo + u * (hi - lo)


# ---------------------------------------------------------------------------
# domains


class Domain:
    """Bounded domain with a membership test and a boundary sampler."""

    dim: int
    kind: str
    lo: np.ndarray
    hi: np.ndarray

    @property
    def bounding_box(self):
        return self.lo, self.hi

    def contains(self, x):
        raise NotImplementedError

    def boundary_residual(self, x):
        """Defining relation of ∂Ω; zero on the boundary."""
        raise NotImplementedError

    def sample_boundary(self, n, rng):
        """Return (points, outward normals, bc tags)."""
        raise NotImplementedError

    def outward_normal(self, x):
        """Outward unit normal at boundary points."""
        raise NotImplementedError


class Interval(Domain):
    def __init__(self, a, b):
        self.a, self.b = float(a), float(b)
        self.dim = 1
        self.kind = "interval"
        self.lo, self.hi = np.array([self.a]), np.array([self.b])

    def contains(self, x):
        x = _pts(x, 1)[:, 0]
        return (x >= self.a) & (x <= self.b)

    def boundary_residual(self, x):
        x = _pts(x, 1)[:, 0]
        return np.minimum(np.abs(x - self.a), np.abs(x - self.b))

    def sample_boundary(self, n, rng):
        if n % 2:
            raise ConfigurationError("an interval has two boundary points; M_B must be even", "M_B")
        pts = np.tile([[self.a], [self.b]], (n // 2, 1))
        nrm = np.tile([[-1.0], [1.0]], (n // 2, 1))
        return pts, nrm, np.full(n, DIRICHLET)

    def outward_normal(self, x):
        x = _pts(x, 1)
        return np.where(np.abs(x - self.a) < np.abs(x - self.b), -1.0, 1.0)


class Box(Domain):
    """Axis-aligned box; ``neumann_axes`` lists axes whose two faces are Neumann."""

    def __init__(self, lo, hi, neumann_axes=()):
        self.lo = np.asarray(lo, dtype=np.float64)
        self.hi = np.asarray(hi, dtype=np.float64)
        self.dim = self.lo.shape[0]
        self.kind = "box"
        self.neumann_axes = tuple(int(a) for a in neumann_axes)

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.all((x >= self.lo) & (x <= self.hi), axis=1)

    def boundary_residual(self, x):
        x = _pts(x, self.dim)
        return np.min(np.minimum(np.abs(x - self.lo), np.abs(x - self.hi)), axis=1)

    def sample_boundary(self, n, rng):
        """Equal share per face (remainder to the first faces), LHS on each face."""
        rng = _rng(rng)
        nf = 2 * self.dim
        counts = np.full(nf, n // nf)
        counts[: n % nf] += 1
        pts, nrm, tags = [], [], []
        for f in range(nf):
            axis, side = divmod(f, 2)
            m = counts[f]
            if m == 0:
                continue
            p = np.empty((m, self.dim))
            others = [a for a in range(self.dim) if a != axis]
            if others:
                p[:, others] = latin_hypercube(m, (self.lo[others], self.hi[others]), rng)
            p[:, axis] = self.hi[axis] if side else self.lo[axis]
            q = np.zeros((m, self.dim))
            q[:, axis] = 1.0 if side else -1.0
            pts.append(p)
            nrm.append(q)
            tags.append(np.full(m, NEUMANN if axis in self.neumann_axes else DIRICHLET))
        return np.concatenate(pts), np.concatenate(nrm), np.concatenate(tags)

    def outward_normal(self, x):
        x = _pts(x, self.dim)
        gaps = np.concatenate([np.abs(x - self.lo), np.abs(x - self.hi)], axis=1)
        f = np.argmin(gaps, axis=1)
        out = np.zeros_like(x)
        out[np.arange(x.shape[0]), f % self.dim] = np.where(f >= self.dim, 1.0, -1.0)
        return out


class Ball(Domain):
    def __init__(self, radius, dim):
        self.radius = float(radius)
        self.dim = int(dim)
        self.kind = "ball"
        self.lo = np.full(self.dim, -self.radius)
        self.hi = np.full(self.dim, self.radius)

    def contains(self, x):
        x = _pts(x, self.dim)
        return np.einsum("ij,ij->i", x, x) <= self.radius**2

    def boundary_residual(self, x):
        return np.abs(np.linalg.norm(_pts(x, self.dim), axis=1) - self.radius)

    def sample_boundary(self, n, rng):
        d = sphere_directions(n, self.dim, rng)
        return self.radius * d, d, np.full(n, DIRICHLET)

    def outward_normal(self, x):
        x = _pts(x, self.dim)
        return x / np.linalg.norm(x, axis=1, keepdims=True)


class SphericalShell(Domain):
    """{r_in <= |x| <= r_out}; boundary points split by surface area."""

    def __init__(self, r_inner, r_outer, dim=3):
        self.r_inner, self.r_outer = float(r_inner), float(r_outer)
        self.dim = int(dim)
        self.kind = "spherical-shell"
        self.lo = np.full(self.dim, -self.r_outer)
        self.hi = np.full(self.dim, self.r_outer)

    def contains(self, x):
        x = _pts(x, self.dim)
        r2 = np.einsum("ij,ij->i", x, x)
        return (r2 >= self.r_inner**2) & (r2 <= self.r_outer**2)

    def boundary_residual(self, x):
        r = np.linalg.norm(_pts(x, self.dim), axis=1)
        return np.minimum(np.abs(r - self.r_inner), np.abs(r - self.r_outer))

    def split(self, n):
        w = self.r_inner ** (self.dim - 1)
        n_in = int(round(n * w / (w + self.r_outer ** (self.dim - 1))))
        return n_in, n - n_in

    def sample_boundary(self, n, rng):
        rng = _rng(rng)
        n_in, n_out = self.split(n)
        d_in = sphere_directions(n_in, self.dim, rng)
        d_out = sphere_directions(n_out, self.dim, rng)
        pts = np.concatenate([self.r_inner * d_in, self.r_outer * d_out])
        nrm = np.concatenate([-d_in, d_out])
        return pts, nrm, np.full(n, DIRICHLET)

    def outward_normal(self, x):
        x = _pts(x, self.dim)
        r = np.linalg.norm(x, axis=1, keepdims=True)
        inner = np.abs(r - self.r_inner) < np.abs(r - self.r_outer)
        return np.where(inner, -1.0, 1.0) * x / r


class Flower(Domain):
    """2-D region r <= r_base - amp·cos(k θ)."""

    def __init__(self, r_base=1.0, amp=0.2, k=5):
        self.r_base, self.amp, self.k = float(r_base), float(amp), int(k)
        self.dim = 2
        self.kind = "flower"
        rmax = self.r_base + abs(self.amp)
        self.lo = np.full(2, -rmax)
        self.hi = np.full(2, rmax)

    def radius(self, t):
        return self.r_base - self.amp * np.cos(self.k * t)

    def contains(self, x):
        x = _pts(x, 2)
        return np.hypot(x[:, 0], x[:, 1]) <= self.radius(np.arctan2(x[:, 1], x[:, 0]))

    def boundary_residual(self, x):
        x = _pts(x, 2)
        return np.abs(np.hypot(x[:, 0], x[:, 1]) - self.radius(np.arctan2(x[:, 1], x[:, 0])))

    def sample_boundary(self, n, rng):
        rng = _rng(rng)
        t = 2 * np.pi * (rng.permutation(n) + rng.random(n)) / n - np.pi
        pts, nrm = self._at_angle(t)
        return pts, nrm, np.full(n, DIRICHLET)

    def outward_normal(self, x):
        x = _pts(x, 2)
        return self._at_angle(np.arctan2(x[:, 1], x[:, 0]))[1]

    def _at_angle(self, t):
        r = self.radius(t)
        dr = self.amp * self.k * np.sin(self.k * t)
        c, s = np.cos(t), np.sin(t)
        pts = np.stack([r * c, r * s], axis=1)
        tx, ty = dr * c - r * s, dr * s + r * c
        nrm = np.stack([ty, -tx], axis=1)
        nrm /= np.linalg.norm(nrm, axis=1, keepdims=True)
        return pts, nrm


# ---------------------------------------------------------------------------
# collocation


@dataclass
class CollocationSet:
    """Training points; ordering is the sampler order and fixes residual rows."""

    interior: np.ndarray
    interior_sign: np.ndarray
    interface: np.ndarray
    interface_normals: np.ndarray
    boundary: np.ndarray
    boundary_normals: np.ndarray
    boundary_tags: np.ndarray
    M0: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def M_I(self):
        return self.interior.shape[0]

    @property
    def M_gamma(self):
        return self.interface.shape[0]

    @property
    def M_B(self):
        return self.boundary.shape[0]

    @property
    def M(self):
        return self.M_I + self.M_gamma + self.M_B

    def to_csv(self, path):
        """One row per point: coordinates, tag, normal components (blank for interior)."""
        d = self.interior.shape[1] if self.M_I else self.boundary.shape[1]
        head = [f"x{i}" for i in range(d)] + ["tag", "bc"] + [f"n{i}" for i in range(d)]
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(head)
            for p, s in zip(self.interior, self.interior_sign):
                w.writerow([repr(float(v)) for v in p] + ["interior+" if s > 0 else "interior-", ""] + [""] * d)
            for p, n in zip(self.interface, self.interface_normals):
                w.writerow([repr(float(v)) for v in p] + ["interface", ""] + [repr(float(v)) for v in n])
            for p, n, t in zip(self.boundary, self.boundary_normals, self.boundary_tags):
                w.writerow([repr(float(v)) for v in p] + ["boundary", str(t)] + [repr(float(v)) for v in n])
        return path


def sample_interior(domain, ls, M_I, seed, max_oversample=1000):
    """Latin-hypercube points in the bounding box, filtered to Ω off the band.

    Returns ``(points, signs)``.
    """
    if M_I < 1:
        raise ConfigurationError("M_I must be >= 1", "M_I")
    rng = _rng(seed)
    accepted = []
    have = drawn = 0
    rate = 1.0
    box = domain.bounding_box
    while have < M_I:
        if drawn >= max_oversample * M_I:
            raise GeometryError(f"interior acceptance rate {have / max(drawn, 1):.2e} too low for the domain")
        batch = int(np.ceil(1.1 * (M_I - have) / max(rate, 0.01))) + 1
        x = latin_hypercube(batch, box, rng)
        keep = domain.contains(x) & (np.abs(ls.phi(x)) > INTERFACE_BAND)
        accepted.append(x[keep])
        have += int(keep.sum())
        drawn += batch
        rate = max(have / drawn, 1e-6)
    if have / drawn < 0.01:
        raise GeometryError(f"interior acceptance rate {have / drawn:.2e} below 1%")
    pts = np.concatenate(accepted)[:M_I]
    return pts, np.where(ls.phi(pts) > 0, 1.0, -1.0)


def sample_interface(ls, M_gamma, seed):
    """``(points, unit normals)`` on Γ with |φ| <= 1e-10."""
    if M_gamma < 1:
        raise ConfigurationError("M_Gamma must be >= 1", "M_Gamma")
    pts = ls.sample(M_gamma, _rng(seed))
    if np.max(np.abs(ls.phi(pts))) > 1e-10:
        pts = ls.project(pts)
    return pts, unit_normal(ls, pts)


def sample_boundary(domain, M_B, seed):
    if M_B < 1:
        raise ConfigurationError("M_B must be >= 1", "M_B")
    return domain.sample_boundary(M_B, _rng(seed))


def sample_collocation(domain, ls, M_I, M_gamma, M_B, seed, M0=None):
    """All three point families from independent child streams of ``seed``."""
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    s_int, s_gam, s_bdy = ss.spawn(3)
    xi, si = sample_interior(domain, ls, M_I, np.random.default_rng(s_int))
    xg, ng = sample_interface(ls, M_gamma, np.random.default_rng(s_gam))
    xb, nb, tb = sample_boundary(domain, M_B, np.random.default_rng(s_bdy))
    return CollocationSet(xi, si, xg, ng, xb, nb, tb, M0=M0)
