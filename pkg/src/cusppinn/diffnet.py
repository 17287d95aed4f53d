"""Fully connected sigmoid network with exact input and parameter derivatives.

The network maps an input ``v0 = (x, z)`` through ``L`` sigmoid layers and a
final bias-free linear map::

    v[l] = sigmoid(W[l] v[l-1] + b[l]),   l = 1..L
    U    = W[L+1] v[L]

Two derivative engines are provided.

* :func:`forward_jet` propagates the full input gradient and Hessian layer by
  layer.  It is the reference used by the per-point residual API.
* :func:`directional_jets` / :func:`functional_jacobian` propagate first and
  second *directional* derivatives along a small set of per-point directions
  and differentiate a linear functional of them with respect to every
  parameter (reverse mode over the forward jet).  Every residual the solver
  needs is such a functional, so this is what training uses.

Flat parameter order (``flat_view``): for each hidden layer ``W[l]`` in
row-major order followed by ``b[l]``; then the output row ``W[L+1]``.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, ContractError

ACTIVATIONS = ("sigmoid",)

_MAGIC = b"CUSPNET1"


@dataclass(frozen=True)
class NetworkParams:
    """Immutable weights and biases of a fully connected network.

    ``weights[l]`` has shape ``(N_{l+1}, N_l)``; ``biases`` has one entry per
    hidden layer (the output map is bias-free).
    """

    layer_sizes: tuple
    weights: tuple
    biases: tuple
    activation: str = "sigmoid"

    def __post_init__(self):
        sizes = tuple(int(n) for n in self.layer_sizes)
        _check_layer_sizes(sizes)
        if self.activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {self.activation!r}", "activation")
        if len(self.weights) != len(sizes) - 1 or len(self.biases) != len(sizes) - 2:
            raise ContractError("weights/biases do not match layer_sizes")
        ws, bs = [], []
        for l, w in enumerate(self.weights):
            w = np.array(w, dtype=np.float64)
            if w.shape != (sizes[l + 1], sizes[l]):
                raise ContractError(f"weight {l} has shape {w.shape}")
            w.setflags(write=False)
            ws.append(w)
        for l, b in enumerate(self.biases):
            b = np.array(b, dtype=np.float64)
            if b.shape != (sizes[l + 1],):
                raise ContractError(f"bias {l} has shape {b.shape}")
            b.setflags(write=False)
            bs.append(b)
        object.__setattr__(self, "layer_sizes", sizes)
        object.__setattr__(self, "weights", tuple(ws))
        object.__setattr__(self, "biases", tuple(bs))

    @property
    def n_inputs(self):
        return self.layer_sizes[0]

    @property
    def n_hidden_layers(self):
        return len(self.layer_sizes) - 2

    @property
    def n_params(self):
        return param_count(self.layer_sizes)

    def flatten(self):
        """Return the flat parameter vector θ in canonical order."""
        parts = []
        for w, b in zip(self.weights[:-1], self.biases):
            parts.append(w.ravel())
            parts.append(b)
        parts.append(self.weights[-1].ravel())
        return np.concatenate(parts)

    @property
    def flat_view(self):
        return self.flatten()

    def with_flat(self, theta):
        return unflatten(self.layer_sizes, theta, self.activation)


def _check_layer_sizes(sizes):
    if len(sizes) < 3:
        raise ConfigurationError("need input, at least one hidden layer and output", "layer_sizes")
    if any(n < 1 for n in sizes):
        raise ConfigurationError("all layer sizes must be >= 1", "layer_sizes")
    if sizes[-1] != 1:
        raise ConfigurationError("output layer must have size 1", "layer_sizes")


def param_count(layer_sizes):
    """N_θ = N_L + Σ_l (N_{l-1} + 1) N_l."""
    sizes = [int(n) for n in layer_sizes]
    hidden = sizes[1:-1]
    return hidden[-1] + sum((sizes[l - 1] + 1) * sizes[l] for l in range(1, len(sizes) - 1))


def _layout(layer_sizes):
    """Offsets of each W/b block inside θ."""
    sizes = list(layer_sizes)
    blocks = []
    off = 0
    for l in range(1, len(sizes) - 1):
        nw = sizes[l] * sizes[l - 1]
        blocks.append((off, off + nw, off + nw + sizes[l]))
        off += nw + sizes[l]
    blocks.append((off, off + sizes[-2], None))
    return blocks


def unflatten(layer_sizes, theta, activation="sigmoid"):
    sizes = tuple(int(n) for n in layer_sizes)
    _check_layer_sizes(sizes)
    theta = np.asarray(theta, dtype=np.float64)
    if theta.shape != (param_count(sizes),):
        raise ContractError(f"theta has shape {theta.shape}, expected ({param_count(sizes)},)")
    ws, bs = [], []
    for l, (w0, w1, b1) in enumerate(_layout(sizes)):
        ws.append(theta[w0:w1].reshape(sizes[l + 1], sizes[l]))
        if b1 is not None:
            bs.append(theta[w1:b1])
    return NetworkParams(sizes, tuple(ws), tuple(bs), activation)


def init_params(layer_sizes, seed):
    """Uniform fan-in initialisation on [-1/sqrt(fan_in), 1/sqrt(fan_in)].

    Weights and biases of every layer (including the bias-free output row)
    use the fan-in of that layer.
    """
    sizes = tuple(int(n) for n in layer_sizes)
    _check_layer_sizes(sizes)
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for l in range(1, len(sizes)):
        bound = 1.0 / np.sqrt(sizes[l - 1])
        ws.append(rng.uniform(-bound, bound, size=(sizes[l], sizes[l - 1])))
        if l < len(sizes) - 1:
            bs.append(rng.uniform(-bound, bound, size=sizes[l]))
    return NetworkParams(sizes, tuple(ws), tuple(bs))


# ---------------------------------------------------------------------------
# evaluation


def _as_batch(params, x):
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != params.n_inputs:
        raise ContractError(f"input shape {x.shape} does not match n_inputs={params.n_inputs}")
    return X, single


def _sigmoid_derivs(z):
    s = expit(z)
    s1 = s * (1.0 - s)
    s2 = s1 * (1.0 - 2.0 * s)
    return s, s1, s2


def forward(params, x):
    """Network output U for one input vector (float) or a batch ``(M, n_in)``."""
    X, single = _as_batch(params, x)
    v = X
    for w, b in zip(params.weights[:-1], params.biases):
        v = expit(v @ w.T + b)
    out = v @ params.weights[-1][0]
    return float(out[0]) if single else out


@dataclass(frozen=True)
class Jet2:
    """Network value with exact input gradient and Hessian.

    For a batch, ``value`` is ``(M,)``, ``grad`` ``(M, n)`` and ``hess``
    ``(M, n, n)``.  The last input coordinate is the augmented variable z.
    """

    value: object
    grad: np.ndarray
    hess: np.ndarray

    @property
    def grad_x(self):
        return self.grad[..., :-1]

    @property
    def u_z(self):
        return self.grad[..., -1]

    @property
    def lap_x(self):
        return np.trace(self.hess[..., :-1, :-1], axis1=-2, axis2=-1)

    @property
    def grad_x_u_z(self):
        return self.hess[..., :-1, -1]

    @property
    def u_zz(self):
        return self.hess[..., -1, -1]


def forward_jet(params, x):
    """Value, input gradient and input Hessian of the network."""
    X, single = _as_batch(params, x)
    v = X
    jac = None  # d v / d input, shape (M, N, n)
    hes = None
    n = X.shape[1]
    for w, b in zip(params.weights[:-1], params.biases):
        z = v @ w.T + b
        if jac is None:
            jz = np.broadcast_to(w, (X.shape[0],) + w.shape)
            hz = None
        else:
            jz = np.einsum("ij,mjk->mik", w, jac)
            hz = np.einsum("ij,mjkl->mikl", w, hes)
        s, s1, s2 = _sigmoid_derivs(z)
        v = s
        jac = s1[:, :, None] * jz
        hes = s2[:, :, None, None] * jz[:, :, :, None] * jz[:, :, None, :]
        if hz is not None:
            hes = hes + s1[:, :, None, None] * hz
    wo = params.weights[-1][0]
    value = v @ wo
    grad = np.einsum("j,mjk->mk", wo, jac)
    hess = np.einsum("j,mjkl->mkl", wo, hes)
    hess = 0.5 * (hess + np.swapaxes(hess, -1, -2))
    assert grad.shape[1] == n
    if single:
        return Jet2(float(value[0]), grad[0], hess[0])
    return Jet2(value, grad, hess)


# ---------------------------------------------------------------------------
# directional jets and their parameter Jacobians


@dataclass
class _Trace:
    inputs: np.ndarray
    dirs: np.ndarray
    layers: list  # per hidden layer: (s, s1, s2, zd, zdd, v, vd, vdd)
    second: bool


def _directional_forward(params, X, P, second):
    M = X.shape[0]
    K = P.shape[1]
    v, vd = X, P
    vdd = None
    layers = []
    for w, b in zip(params.weights[:-1], params.biases):
        z = v @ w.T + b
        zd = vd @ w.T
        s, s1, s2 = _sigmoid_derivs(z)
        vd_new = s1[:, None, :] * zd
        if second:
            zdd = None if vdd is None else vdd @ w.T
            vdd_new = s2[:, None, :] * zd * zd
            if zdd is not None:
                vdd_new = vdd_new + s1[:, None, :] * zdd
        else:
            zdd = vdd_new = None
        layers.append((s, s1, s2, zd, zdd, s, vd_new, vdd_new))
        v, vd, vdd = s, vd_new, vdd_new
    assert vd.shape[:2] == (M, K)
    return _Trace(X, P, layers, second)


def _check_dirs(params, X, P):
    P = np.asarray(P, dtype=np.float64)
    if P.ndim != 3 or P.shape[0] != X.shape[0] or P.shape[2] != params.n_inputs:
        raise ContractError(f"directions shape {P.shape} incompatible with inputs {X.shape}")
    return P


def directional_jets(params, X, P, second=True):
    """Value and first/second derivatives along per-point directions.

    Parameters
    ----------
    X : (M, n_in) inputs.
    P : (M, K, n_in) directions.

    Returns
    -------
    value (M,), first (M, K) with ``p·∇U`` and second (M, K) with ``pᵀ H p``
    (``None`` when ``second`` is false).
    """
    X, _ = _as_batch(params, X)
    P = _check_dirs(params, X, P)
    tr = _directional_forward(params, X, P, second)
    wo = params.weights[-1][0]
    last = tr.layers[-1]
    value = last[5] @ wo
    first = last[6] @ wo
    sec = last[7] @ wo if second else None
    return value, first, sec


def _functional_values(params, tr, a0, a1, a2):
    wo = params.weights[-1][0]
    _, _, _, _, _, v, vd, vdd = tr.layers[-1]
    out = a0 * (v @ wo) + np.einsum("mk,mk->m", a1, vd @ wo)
    if a2 is not None:
        out = out + np.einsum("mk,mk->m", a2, vdd @ wo)
    return out


def functional_values(params, X, P, a0, a1, a2=None):
    """Evaluate ``R = a0 U + Σ_k a1_k (p_k·∇U) + Σ_k a2_k (p_kᵀ H p_k)`` per point."""
    X, _ = _as_batch(params, X)
    P = _check_dirs(params, X, P)
    tr = _directional_forward(params, X, P, a2 is not None)
    return _functional_values(params, tr, a0, a1, a2)


def _backward(params, tr, a0, a1, a2, reduce):
    """Reverse sweep of R with respect to all parameters.

    Returns per-point rows ``(M, N_θ)`` or, when ``reduce`` is true, the
    sum over points (used for vector-Jacobian products).
    """
    sizes = params.layer_sizes
    M = tr.inputs.shape[0]
    second = a2 is not None
    wo = params.weights[-1][0]
    _, _, _, _, _, vL, vdL, vddL = tr.layers[-1]
    pt = "" if reduce else "m"

    grads = [None] * len(params.weights)
    gw_out = a0[:, None] * vL + np.einsum("mk,mkn->mn", a1, vdL)
    if second:
        gw_out = gw_out + np.einsum("mk,mkn->mn", a2, vddL)
    grads[-1] = gw_out.sum(axis=0) if reduce else gw_out

    vb = a0[:, None] * wo
    vdb = a1[:, :, None] * wo
    vddb = a2[:, :, None] * wo if second else None
    gbs = [None] * len(params.biases)
    for l in range(len(tr.layers) - 1, -1, -1):
        s, s1, s2, zd, zdd, _, _, _ = tr.layers[l]
        s1e = s1[:, None, :]
        s2e = s2[:, None, :]
        zb = vb * s1 + np.einsum("mkn,mkn->mn", vdb, s2e * zd)
        zdb = vdb * s1e
        if second:
            s3e = (s1 * (1.0 - 6.0 * s1))[:, None, :]
            t = s3e * zd * zd
            if zdd is not None:
                t = t + s2e * zdd
            zb = zb + np.einsum("mkn,mkn->mn", vddb, t)
            zdb = zdb + 2.0 * vddb * s2e * zd
            zddb = vddb * s1e
        if l == 0:
            v_prev, vd_prev, vdd_prev = tr.inputs, tr.dirs, None
        else:
            _, _, _, _, _, v_prev, vd_prev, vdd_prev = tr.layers[l - 1]
        gW = np.einsum(f"mi,mj->{pt}ij", zb, v_prev)
        gW = gW + np.einsum(f"mki,mkj->{pt}ij", zdb, vd_prev)
        if second and vdd_prev is not None:
            gW = gW + np.einsum(f"mki,mkj->{pt}ij", zddb, vdd_prev)
        grads[l] = gW
        gbs[l] = zb.sum(axis=0) if reduce else zb
        if l > 0:
            w = params.weights[l]
            vb = zb @ w
            vdb = zdb @ w
            vddb = zddb @ w if second else None

    n = param_count(sizes)
    out = np.empty(n) if reduce else np.empty((M, n))
    for l, (w0, w1, b1) in enumerate(_layout(sizes)):
        if reduce:
            out[w0:w1] = grads[l].ravel()
            if b1 is not None:
                out[w1:b1] = gbs[l]
        else:
            out[:, w0:w1] = grads[l].reshape(M, -1)
            if b1 is not None:
                out[:, w1:b1] = gbs[l]
    return out


def functional_jacobian(params, X, P, a0, a1, a2=None):
    """Values of the linear functional and its exact Jacobian ``(M, N_θ)``."""
    X, _ = _as_batch(params, X)
    P = _check_dirs(params, X, P)
    tr = _directional_forward(params, X, P, a2 is not None)
    vals = _functional_values(params, tr, a0, a1, a2)
    return vals, _backward(params, tr, a0, a1, a2, reduce=False)


def functional_vjp(params, X, P, a0, a1, a2, cotangent):
    """Values and ``Σ_m c_m ∂R_m/∂θ`` without materialising the Jacobian."""
    X, _ = _as_batch(params, X)
    P = _check_dirs(params, X, P)
    tr = _directional_forward(params, X, P, a2 is not None)
    vals = _functional_values(params, tr, a0, a1, a2)
    c = np.asarray(cotangent, dtype=np.float64)
    g = _backward(params, tr, a0 * c, a1 * c[:, None], None if a2 is None else a2 * c[:, None], reduce=True)
    return vals, g


@dataclass(frozen=True)
class JetSensitivities:
    """∂(jet entry)/∂θ for one input: value (N_θ,), grad (n, N_θ), hess (n, n, N_θ)."""

    value: np.ndarray
    grad: np.ndarray
    hess: np.ndarray


def param_jacobian_of_jet(params, x):
    """Jet2 at ``x`` plus the exact θ-derivative of every jet entry.

    Hessian entries are recovered from directional second derivatives by
    polarisation, ``H_ij = (D²_{e_i+e_j} - D²_{e_i} - D²_{e_j}) / 2``, each of
    which is differentiated exactly in reverse mode.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != params.n_inputs:
        raise ContractError(f"input shape {x.shape} does not match n_inputs={params.n_inputs}")
    n = x.shape[0]
    eye = np.eye(n)
    rows = [("v", None)] + [("g", i) for i in range(n)]
    rows += [("h", (i, j)) for i in range(n) for j in range(i, n)]
    R = len(rows)
    P = np.zeros((R, 3, n))
    a0 = np.zeros(R)
    a1 = np.zeros((R, 3))
    a2 = np.zeros((R, 3))
    for r, (kind, idx) in enumerate(rows):
        if kind == "v":
            a0[r] = 1.0
        elif kind == "g":
            P[r, 0] = eye[idx]
            a1[r, 0] = 1.0
        else:
            i, j = idx
            if i == j:
                P[r, 0] = eye[i]
                a2[r, 0] = 1.0
            else:
                P[r, 0] = eye[i] + eye[j]
                P[r, 1] = eye[i]
                P[r, 2] = eye[j]
                a2[r] = (0.5, -0.5, -0.5)
    X = np.repeat(x[None, :], R, axis=0)
    _, jac = functional_jacobian(params, X, P, a0, a1, a2)
    sv = jac[0]
    sg = jac[1 : n + 1]
    sh = np.empty((n, n, jac.shape[1]))
    for r, (kind, idx) in enumerate(rows):
        if kind == "h":
            i, j = idx
            sh[i, j] = jac[r]
            sh[j, i] = jac[r]
    return forward_jet(params, x), JetSensitivities(sv, sg, sh)


# ---------------------------------------------------------------------------
# serialisation


def _header(params):
    return {"layer_sizes": list(params.layer_sizes), "activation": params.activation}


def save_params(params, path):
    """Write parameters; ``.json`` gives a text array, anything else binary.

    Binary layout: magic ``CUSPNET1``, little-endian uint32 header length,
    UTF-8 JSON header, then θ as little-endian float64.
    """
    path = Path(path)
    theta = params.flatten()
    if path.suffix == ".json":
        doc = _header(params) | {"theta": theta.tolist()}
        path.write_text(json.dumps(doc))
        return path
    head = json.dumps(_header(params)).encode()
    with path.open("wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<I", len(head)))
        fh.write(head)
        fh.write(theta.astype("<f8").tobytes())
    return path


def params_to_dict(params):
    return _header(params) | {"theta": params.flatten().tolist()}


def params_from_dict(doc):
    return unflatten(doc["layer_sizes"], np.array(doc["theta"], dtype=np.float64), doc.get("activation", "sigmoid"))


def load_params(path):
    path = Path(path)
    raw = path.read_bytes()
    if raw[: len(_MAGIC)] != _MAGIC:
        return params_from_dict(json.loads(raw.decode()))
    (hlen,) = struct.unpack("<I", raw[len(_MAGIC) : len(_MAGIC) + 4])
    start = len(_MAGIC) + 4
    head = json.loads(raw[start : start + hlen].decode())
    theta = np.frombuffer(raw[start + hlen :], dtype="<f8").astype(np.float64)
    return unflatten(head["layer_sizes"], theta, head["activation"])
