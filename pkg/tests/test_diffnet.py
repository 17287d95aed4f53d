import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cusppinn import diffnet
from cusppinn.errors import ConfigurationError, ContractError


def _net(sizes, seed=0, scale=1.0):
    p = diffnet.init_params(sizes, seed)
    return p.with_flat(scale * p.flatten())


def _fd_grad(f, x, h=1e-6):
    return np.array([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(x.size)])


def test_param_count_matches_closed_form():
    # one hidden layer on (x, y, z): N(d+3) with d = 2
    for n in (1, 20, 50):
        assert diffnet.param_count((3, n, 1)) == 5 * n
    assert diffnet.param_count((4, 12, 12, 1)) == (4 + 1) * 12 + (12 + 1) * 12 + 12


def test_constant_network_value():
    p = diffnet.NetworkParams((2, 1, 1), (np.zeros((1, 2)), np.array([[2.0]])), (np.zeros(1),))
    for x in ([0.0, 0.0], [3.0, -7.0]):
        assert diffnet.forward(p, np.array(x)) == 1.0


def test_flatten_roundtrip_and_layout():
    p = _net((3, 4, 5, 1), seed=2)
    theta = p.flatten()
    assert theta.shape == (p.n_params,)
    q = diffnet.unflatten(p.layer_sizes, theta)
    for a, b in zip(p.weights, q.weights):
        assert np.array_equal(a, b)
    # first block is W[1] row-major, then b[1]
    assert np.array_equal(theta[:12], p.weights[0].ravel())
    assert np.array_equal(theta[12:16], p.biases[0])
    assert np.array_equal(theta[-5:], p.weights[-1][0])


def test_params_are_read_only():
    p = _net((2, 3, 1))
    with pytest.raises(ValueError):
        p.weights[0][0, 0] = 1.0


def test_init_is_seeded_and_bounded():
    a = diffnet.init_params((3, 40, 1), 7)
    b = diffnet.init_params((3, 40, 1), 7)
    c = diffnet.init_params((3, 40, 1), 8)
    assert np.array_equal(a.flatten(), b.flatten())
    assert not np.array_equal(a.flatten(), c.flatten())
    assert np.all(np.abs(a.weights[0]) <= 1 / np.sqrt(3))
    assert np.all(np.abs(a.weights[1]) <= 1 / np.sqrt(40))


@pytest.mark.parametrize("sizes", [(2,), (2, 3, 2), (2, 0, 1)])
def test_bad_layer_sizes(sizes):
    with pytest.raises(ConfigurationError):
        diffnet.init_params(sizes, 0)


def test_input_shape_contract():
    p = _net((3, 4, 1))
    with pytest.raises(ContractError):
        diffnet.forward(p, np.zeros(2))
    with pytest.raises(ContractError):
        diffnet.forward_jet(p, np.zeros((5, 4)))


def test_sigmoid_does_not_overflow():
    p = _net((2, 3, 1), scale=1e4)
    with np.errstate(over="raise"):
        v = diffnet.forward(p, np.array([[50.0, -50.0], [1e3, 1e3]]))
        jet = diffnet.forward_jet(p, np.array([1e3, -1e3]))
    assert np.all(np.isfinite(v)) and np.isfinite(jet.value)


def test_jet_value_is_bitwise_forward():
    p = _net((4, 6, 5, 1), seed=3)
    x = np.random.default_rng(0).normal(size=(20, 4))
    assert np.array_equal(diffnet.forward_jet(p, x).value, diffnet.forward(p, x))


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10_000), d=st.sampled_from([1, 2, 3, 6]), depth=st.integers(1, 3))
def test_jet_matches_finite_differences(seed, d, depth):
    rng = np.random.default_rng(seed)
    sizes = (d + 1,) + tuple(int(n) for n in rng.integers(1, 8, size=depth)) + (1,)
    p = _net(sizes, seed, scale=2.0)
    x = rng.uniform(-1, 1, size=d + 1)
    jet = diffnet.forward_jet(p, x)
    g_fd = _fd_grad(lambda y: diffnet.forward(p, y), x)
    h_fd = np.array([_fd_grad(lambda y, k=k: diffnet.forward_jet(p, y).grad[k], x) for k in range(d + 1)])
    assert np.allclose(jet.grad, g_fd, rtol=1e-6, atol=1e-8)
    assert np.allclose(jet.hess, h_fd, rtol=1e-5, atol=1e-7)
    assert np.array_equal(jet.hess, jet.hess.T)


def test_directional_jets_agree_with_full_jet():
    rng = np.random.default_rng(1)
    p = _net((3, 7, 4, 1), 1, scale=1.5)
    X = rng.normal(size=(9, 3))
    P = rng.normal(size=(9, 4, 3))
    v, d1, d2 = diffnet.directional_jets(p, X, P)
    jet = diffnet.forward_jet(p, X)
    assert np.allclose(v, jet.value, atol=1e-14)
    assert np.allclose(d1, np.einsum("mki,mi->mk", P, jet.grad), atol=1e-12)
    assert np.allclose(d2, np.einsum("mki,mij,mkj->mk", P, jet.hess, P), atol=1e-11)


def _functional_case(seed=0):
    rng = np.random.default_rng(seed)
    p = _net((3, 5, 4, 1), seed, scale=1.5)
    M, K = 7, 3
    X, P = rng.normal(size=(M, 3)), rng.normal(size=(M, K, 3))
    a0, a1, a2 = rng.normal(size=M), rng.normal(size=(M, K)), rng.normal(size=(M, K))
    return p, X, P, a0, a1, a2


def test_functional_jacobian_matches_finite_differences():
    p, X, P, a0, a1, a2 = _functional_case()
    vals, J = diffnet.functional_jacobian(p, X, P, a0, a1, a2)
    theta = p.flatten()

    def f(t):
        return diffnet.functional_values(p.with_flat(t), X, P, a0, a1, a2)

    fd = _fd_grad(f, theta).T
    assert np.allclose(vals, f(theta), atol=1e-14)
    assert np.allclose(J, fd, rtol=1e-6, atol=1e-8)


def test_functional_without_second_order_terms():
    p, X, P, a0, a1, _ = _functional_case(4)
    _, J = diffnet.functional_jacobian(p, X, P, a0, a1)
    _, J0 = diffnet.functional_jacobian(p, X, P, a0, a1, np.zeros_like(a1))
    assert np.allclose(J, J0, atol=1e-14)


def test_vjp_equals_transposed_jacobian():
    p, X, P, a0, a1, a2 = _functional_case(2)
    c = np.random.default_rng(9).normal(size=X.shape[0])
    _, J = diffnet.functional_jacobian(p, X, P, a0, a1, a2)
    _, g = diffnet.functional_vjp(p, X, P, a0, a1, a2, c)
    assert np.allclose(g, J.T @ c, atol=1e-12)


def test_param_sensitivities_match_finite_differences():
    rng = np.random.default_rng(5)
    p = _net((3, 4, 3, 1), 5, scale=2.0)
    x = rng.uniform(-1, 1, 3)
    jet, sens = diffnet.param_jacobian_of_jet(p, x)
    theta = p.flatten()
    fd_v = _fd_grad(lambda t: diffnet.forward(p.with_flat(t), x), theta)
    fd_g = _fd_grad(lambda t: diffnet.forward_jet(p.with_flat(t), x).grad, theta).T
    fd_h = _fd_grad(lambda t: diffnet.forward_jet(p.with_flat(t), x).hess, theta)
    assert np.allclose(sens.value, fd_v, rtol=1e-5, atol=1e-8)
    assert np.allclose(sens.grad, fd_g, rtol=1e-5, atol=1e-8)
    assert np.allclose(sens.hess, np.moveaxis(fd_h, 0, -1), rtol=1e-5, atol=1e-7)
    assert jet.value == diffnet.forward(p, x)


def test_binary_roundtrip_is_bit_exact(tmp_path):
    p = _net((4, 9, 3, 1), 11)
    path = diffnet.save_params(p, tmp_path / "net.bin")
    q = diffnet.load_params(path)
    assert q.layer_sizes == p.layer_sizes and q.activation == p.activation
    assert np.array_equal(q.flatten(), p.flatten())
    assert path.read_bytes().startswith(b"CUSPNET1")


def test_json_roundtrip(tmp_path):
    p = _net((2, 3, 1), 1)
    q = diffnet.load_params(diffnet.save_params(p, tmp_path / "net.json"))
    assert np.array_equal(q.flatten(), p.flatten())
