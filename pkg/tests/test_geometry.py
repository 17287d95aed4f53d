import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cusppinn import geometry as geo
from cusppinn.bench import EXAMPLE_IDS, make_example
from cusppinn.errors import ConfigurationError, DegeneratePointError


def _fd_grad(f, x, h=1e-6):
    return np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.shape[1])], axis=1)


LEVEL_SETS = [
    geo.PointInterface1D(1 / 3),
    geo.SphereLevelSet(0.5, 2),
    geo.SphereLevelSet(0.6, 3, scale=2.0),
    geo.SphereLevelSet(0.5, 6),
    geo.StarLevelSet(),
]


@pytest.mark.parametrize("ls", LEVEL_SETS, ids=lambda ls: type(ls).__name__ + str(ls.dim))
def test_level_set_derivatives_match_finite_differences(ls):
    x = np.random.default_rng(0).uniform(-0.9, 0.9, size=(20, ls.dim)) + 0.05
    g = ls.grad(x)
    assert np.allclose(g, _fd_grad(ls.phi, x), atol=1e-7)
    lap_fd = sum(_fd_grad(lambda y, k=k: ls.grad(y)[:, k], x)[:, k] for k in range(ls.dim))
    assert np.allclose(ls.lap(x), lap_fd, atol=1e-6)


@pytest.mark.parametrize("example_id", EXAMPLE_IDS)
def test_sampler_counts_tags_and_interface_accuracy(example_id):
    spec = make_example(example_id)
    M_I, M_g, M_B = 40, 25, 18
    col = geo.sample_collocation(spec.domain, spec.level_set, M_I, M_g, M_B, seed=3)
    assert (col.M_I, col.M_gamma, col.M_B, col.M) == (M_I, M_g, M_B, M_I + M_g + M_B)
    ls = spec.level_set
    assert np.max(np.abs(ls.phi(col.interface))) <= 1e-10
    assert np.all(np.abs(ls.phi(col.interior)) > geo.INTERFACE_BAND)
    assert np.all(spec.domain.contains(col.interior))
    assert np.array_equal(col.interior_sign, np.sign(ls.phi(col.interior)))
    assert np.allclose(np.linalg.norm(col.interface_normals, axis=1), 1.0)
    assert np.allclose(np.linalg.norm(col.boundary_normals, axis=1), 1.0)
    assert set(col.boundary_tags) <= {geo.DIRICHLET, geo.NEUMANN}
    assert np.max(spec.domain.boundary_residual(col.boundary)) <= 1e-10


def test_interface_normals_point_into_plus_side():
    ls = geo.StarLevelSet()
    pts, n = geo.sample_interface(ls, 50, 0)
    assert np.all(ls.phi(pts + 1e-4 * n) > 0)
    assert np.all(ls.phi(pts - 1e-4 * n) < 0)


@pytest.mark.parametrize("example_id", EXAMPLE_IDS)
def test_boundary_normals_match_outward_normal(example_id):
    dom = make_example(example_id).domain
    x, n, _ = dom.sample_boundary(30, np.random.default_rng(1))
    assert np.allclose(dom.outward_normal(x), n, atol=1e-12)
    # stepping outward leaves the domain
    assert not np.any(dom.contains(x + 1e-6 * n))


def test_box_neumann_faces_are_tagged():
    box = geo.Box([-1, -1], [1, 1], neumann_axes=(0,))
    x, n, tags = box.sample_boundary(40, 0)
    on_x_face = np.isclose(np.abs(x[:, 0]), 1.0) & (np.abs(n[:, 0]) == 1.0)
    assert np.all(tags[on_x_face] == geo.NEUMANN)
    assert np.all(tags[~on_x_face] == geo.DIRICHLET)
    assert on_x_face.sum() == 20


def test_sampling_is_seeded():
    spec = make_example("ex2")
    a = geo.sample_collocation(spec.domain, spec.level_set, 30, 10, 10, seed=5)
    b = geo.sample_collocation(spec.domain, spec.level_set, 30, 10, 10, seed=5)
    c = geo.sample_collocation(spec.domain, spec.level_set, 30, 10, 10, seed=6)
    assert np.array_equal(a.interior, b.interior) and np.array_equal(a.boundary, b.boundary)
    assert not np.array_equal(a.interior, c.interior)


@settings(max_examples=20, deadline=None)
@given(n=st.integers(1, 60), d=st.integers(1, 5), seed=st.integers(0, 1000))
def test_latin_hypercube_is_stratified(n, d, seed):
    lo, hi = -np.ones(d), 2 * np.ones(d)
    x = geo.latin_hypercube(n, (lo, hi), seed)
    cells = np.floor((x - lo) / (hi - lo) * n).astype(int)
    for k in range(d):
        assert sorted(cells[:, k]) == list(range(n))


def test_augmented_feature_modes():
    ls = geo.SphereLevelSet(0.5, 2)
    x = np.array([[0.1, 0.0], [0.9, 0.2]])
    z, gz, lz, s = geo.augmented_feature(ls, x, "phi_abs")
    assert np.allclose(z, np.abs(ls.phi(x))) and np.array_equal(s, [-1.0, 1.0])
    assert np.allclose(gz, s[:, None] * ls.grad(x)) and np.allclose(lz, s * ls.lap(x))
    z, gz, _, _ = geo.augmented_feature(ls, x, "phi")
    assert np.allclose(z, ls.phi(x)) and np.allclose(gz, ls.grad(x))
    assert geo.augmented_feature(ls, x, "none")[0] is None
    with pytest.raises(ConfigurationError):
        geo.augmented_feature(ls, x, "phi_squared")


def test_cusp_eval_rejects_interface_points():
    ls = geo.PointInterface1D(0.5)
    with pytest.raises(DegeneratePointError):
        geo.cusp_eval(ls, np.array([0.5]))
    z, gz, lz, s = geo.cusp_eval(ls, np.array([0.2]))
    assert s == -1.0 and np.isclose(z, 0.3) and np.allclose(gz, [-1.0]) and lz == 0.0


def test_unit_normal_rejects_vanishing_gradient():
    ls = geo.SphereLevelSet(0.5, 2)
    with pytest.raises(DegeneratePointError):
        geo.unit_normal(ls, np.zeros(2))


def test_collocation_csv_has_one_row_per_point(tmp_path):
    spec = make_example("ex2")
    col = geo.sample_collocation(spec.domain, spec.level_set, 12, 7, 5, seed=0)
    lines = col.to_csv(tmp_path / "pts.csv").read_text().splitlines()
    assert lines[0].split(",") == ["x0", "x1", "tag", "bc", "n0", "n1"]
    assert len(lines) == 1 + col.M


@pytest.mark.parametrize("counts", [(0, 1, 1), (1, 0, 1), (1, 1, 0)])
def test_sampler_rejects_empty_families(counts):
    spec = make_example("ex1")
    with pytest.raises(ConfigurationError):
        geo.sample_collocation(spec.domain, spec.level_set, *counts, seed=0)
