"""Solution operator ``(w1, w2, omega) -> (pi_phi, pi_theta, c_b)``.

A dense tanh network with a linear output layer. Inputs are normalised
(``w / w_scale``, ``omega / omega_scale``) inside the model so a saved
file is self-contained.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import autodiff as ad

SCHEMA_VERSION = 1
DEFAULT_DIMS = (3, 32, 256, 256, 32, 3)


class ModelFileError(ValueError):
    pass


@dataclass(frozen=True)
class MlpParams:
    layer_dims: tuple[int, ...]
    weights: tuple[np.ndarray, ...]  # W_k has shape (dims[k+1], dims[k])
    biases: tuple[np.ndarray, ...]
    activation: str = "tanh"
    w_scale: float = 6.0
    omega_scale: float = 1.0
    _packed: dict = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        dims = tuple(int(d) for d in self.layer_dims)
        object.__setattr__(self, "layer_dims", dims)
        if len(dims) < 2:
            raise ValueError("need at least an input and an output layer")
        if len(self.weights) != len(dims) - 1 or len(self.biases) != len(dims) - 1:
            raise ValueError("weights/biases do not match layer_dims")
        for k, (W, b) in enumerate(zip(self.weights, self.biases)):
            if W.shape != (dims[k + 1], dims[k]):
                raise ValueError(f"weights[{k}] has shape {W.shape}, expected {(dims[k + 1], dims[k])}")
            if b.shape != (dims[k + 1],):
                raise ValueError(f"biases[{k}] has shape {b.shape}, expected {(dims[k + 1],)}")
            W.flags.writeable = False
            b.flags.writeable = False
        if self.activation != "tanh":
            raise ValueError(f"unsupported activation {self.activation!r}")

    @property
    def n_params(self) -> int:
        return sum(W.size + b.size for W, b in zip(self.weights, self.biases))

    def flat(self) -> np.ndarray:
        """All parameters as one vector, layer by layer (W row-major, then b)."""
        return np.concatenate([np.concatenate([W.ravel(), b]) for W, b in zip(self.weights, self.biases)])

    def with_flat(self, theta) -> "MlpParams":
        theta = np.asarray(theta, dtype=float)
        if theta.size != self.n_params:
            raise ValueError("parameter vector has the wrong length")
        Ws, bs, i = [], [], 0
        for W, b in zip(self.weights, self.biases):
            Ws.append(theta[i : i + W.size].reshape(W.shape).copy())
            i += W.size
            bs.append(theta[i : i + b.size].copy())
            i += b.size
        return self.replace(Ws, bs)

    def replace(self, weights, biases) -> "MlpParams":
        return MlpParams(self.layer_dims, tuple(weights), tuple(biases), self.activation, self.w_scale, self.omega_scale)

    def packed(self):
        """Contiguous arrays for the compiled kernels (cached)."""
        if not self._packed:
            self._packed["W"] = np.ascontiguousarray(np.concatenate([W.ravel() for W in self.weights]))
            self._packed["b"] = np.ascontiguousarray(np.concatenate(self.biases))
            self._packed["dims"] = np.asarray(self.layer_dims, dtype=np.intp)
        return self._packed["W"], self._packed["b"], self._packed["dims"]


class NetOutput(NamedTuple):
    pi_phi: float
    pi_theta: float
    c_b: float


class LieBundle(NamedTuple):
    out: NetOutput
    l1: tuple[float, float, float]
    l2: tuple[float, float, float]


def init(seed: int = 0, layer_dims=DEFAULT_DIMS, w_scale: float = 6.0, omega_scale: float = 1.0) -> MlpParams:
    """Glorot-uniform weights and zero biases."""
    rng = np.random.default_rng(seed)
    Ws, bs = [], []
    for fan_in, fan_out in zip(layer_dims[:-1], layer_dims[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        Ws.append(rng.uniform(-lim, lim, size=(fan_out, fan_in)))
        bs.append(np.zeros(fan_out))
    return MlpParams(tuple(layer_dims), tuple(Ws), tuple(bs), "tanh", float(w_scale), float(omega_scale))


def zeros(layer_dims=DEFAULT_DIMS, **kw) -> MlpParams:
    Ws = [np.zeros((o, i)) for i, o in zip(layer_dims[:-1], layer_dims[1:])]
    bs = [np.zeros(o) for o in layer_dims[1:]]
    return MlpParams(tuple(layer_dims), tuple(Ws), tuple(bs), "tanh", **kw)


def _inputs(p: MlpParams, w1, w2, omega, xp=np):
    return xp.stack([w1 / p.w_scale, w2 / p.w_scale, omega / p.omega_scale + 0.0 * w1], -1)


def forward_batch(p: MlpParams, w1, w2, omega) -> np.ndarray:
    """Network outputs for arrays of inputs, shape (n, 3)."""
    w1, w2, omega = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (w1, w2, omega)))
    h = _inputs(p, w1, w2, omega)
    last = len(p.weights) - 1
    for k, (W, b) in enumerate(zip(p.weights, p.biases)):
        h = h @ W.T + b
        if k < last:
            h = np.tanh(h)
    return h


def forward(p: MlpParams, w1: float, w2: float, omega: float) -> NetOutput:
    y = forward_batch(p, w1, w2, omega)[0]
    return NetOutput(float(y[0]), float(y[1]), float(y[2]))


def jet_forward(weights, biases, w1, w2, omega, w_scale, omega_scale, xp=np) -> ad.Jet:
    """Push the exosystem curve through the network.

    The seed is the flow of ``w' = S w``: ``x' = (S w, 0)`` and
    ``x'' = (S S w, 0)`` in normalised coordinates, so the returned jet
    holds ``N``, ``L_S N`` and ``L_S^2 N``. Works on numpy or torch arrays.
    """
    z = 0.0 * w1
    x = xp.stack([w1 / w_scale, w2 / w_scale, omega / omega_scale + z], -1)
    dx = xp.stack([omega * w2 / w_scale, -omega * w1 / w_scale, z], -1)
    om2 = omega * omega
    ddx = xp.stack([-om2 * w1 / w_scale, -om2 * w2 / w_scale, z], -1)
    j = ad.Jet(x, dx, ddx)
    last = len(weights) - 1
    for k, (W, b) in enumerate(zip(weights, biases)):
        j = j.linear(W, b)
        if k < last:
            j = j.tanh(xp)
    return j


def lie_bundle_batch(p: MlpParams, w1, w2, omega):
    """Arrays ``(out, l1, l2)``, each of shape (n, 3)."""
    w1, w2, omega = np.broadcast_arrays(*(np.atleast_1d(np.asarray(a, dtype=float)) for a in (w1, w2, omega)))
    j = jet_forward(p.weights, p.biases, w1, w2, omega, p.w_scale, p.omega_scale)
    return j.x, j.dx, j.ddx


def lie_bundle(p: MlpParams, w1: float, w2: float, omega: float) -> LieBundle:
    out, l1, l2 = (a[0] for a in lie_bundle_batch(p, w1, w2, omega))
    return LieBundle(NetOutput(*map(float, out)), tuple(map(float, l1)), tuple(map(float, l2)))


def forward_scalar(p: MlpParams, x):
    """Forward pass on a list of scalars of any :mod:`autodiff` number type."""
    h = list(x)
    last = len(p.weights) - 1
    for k, (W, b) in enumerate(zip(p.weights, p.biases)):
        rows = W.tolist()
        h = [sum((wij * hj for wij, hj in zip(row, h)), float(bk)) for row, bk in zip(rows, b.tolist())]
        if k < last:
            h = [ad.tanh(v) for v in h]
    return h


def lie_bundle_hyperdual(p: MlpParams, w1: float, w2: float, omega: float) -> LieBundle:
    """Reference Lie bundle from hyper-dual numbers (slow; for checks).

    ``L_S^2 N = (Sw)ᵀ H (Sw) + ∇N · S(Sw)``: the Hessian term comes from a
    hyper-dual pass seeded with ``Sw``, the gradient term from a dual pass
    seeded with ``S S w``.
    """
    s = p.w_scale
    x = [w1 / s, w2 / s, omega / p.omega_scale]
    v = [omega * w2 / s, -omega * w1 / s, 0.0]
    a = [-omega * omega * w1 / s, -omega * omega * w2 / s, 0.0]
    f = lambda z: forward_scalar(p, z)  # noqa: E731
    val, d1, vhv = ad.second_directional(f, x, v)
    _, ga = ad.directional(f, x, a)
    l2 = tuple(h + g for h, g in zip(vhv, ga))
    return LieBundle(NetOutput(*val), tuple(d1), l2)


# ---------------------------------------------------------------------------
# serialisation
# ---------------------------------------------------------------------------

def to_json(p: MlpParams) -> str:
    doc = {
        "schema_version": SCHEMA_VERSION,
        "layer_dims": list(p.layer_dims),
        "activation": p.activation,
        "normalization": {"w_scale": p.w_scale, "omega_scale": p.omega_scale},
        "weights": [W.ravel().tolist() for W in p.weights],
        "biases": [b.tolist() for b in p.biases],
    }
    # json writes floats with repr(), which round-trips exactly
    return json.dumps(doc, separators=(",", ":"))


def save(p: MlpParams, path) -> None:
    Path(path).write_text(to_json(p), encoding="utf-8")


def from_json(text: str) -> MlpParams:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelFileError(f"model file is not valid JSON: {exc}") from None
    if not isinstance(doc, dict):
        raise ModelFileError("model file must hold a JSON object")

    def need(key):
        if key not in doc:
            raise ModelFileError(f"model file is missing field {key!r}")
        return doc[key]

    version = need("schema_version")
    if version != SCHEMA_VERSION:
        raise ModelFileError(f"unsupported schema_version {version!r}")
    dims = need("layer_dims")
    if not isinstance(dims, list) or len(dims) < 2 or not all(isinstance(d, int) and d > 0 for d in dims):
        raise ModelFileError("field 'layer_dims' must be a list of positive integers")
    activation = need("activation")
    norm = need("normalization")
    try:
        w_scale, omega_scale = float(norm["w_scale"]), float(norm["omega_scale"])
    except (KeyError, TypeError, ValueError):
        raise ModelFileError("field 'normalization' needs numeric w_scale and omega_scale") from None
    weights, biases = need("weights"), need("biases")
    if len(weights) != len(dims) - 1:
        raise ModelFileError(f"field 'weights' has {len(weights)} layers, layer_dims implies {len(dims) - 1}")
    if len(biases) != len(dims) - 1:
        raise ModelFileError(f"field 'biases' has {len(biases)} layers, layer_dims implies {len(dims) - 1}")
    Ws, bs = [], []
    for k, (fan_in, fan_out) in enumerate(zip(dims[:-1], dims[1:])):
        W = np.asarray(weights[k], dtype=float)
        b = np.asarray(biases[k], dtype=float)
        if W.shape != (fan_in * fan_out,):
            raise ModelFileError(f"field 'weights[{k}]' has {W.size} values, expected {fan_in * fan_out}")
        if b.shape != (fan_out,):
            raise ModelFileError(f"field 'biases[{k}]' has {b.size} values, expected {fan_out}")
        Ws.append(W.reshape(fan_out, fan_in))
        bs.append(b)
    try:
        return MlpParams(tuple(dims), tuple(Ws), tuple(bs), activation, w_scale, omega_scale)
    except ValueError as exc:
        raise ModelFileError(str(exc)) from None


def load(path) -> MlpParams:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ModelFileError(f"cannot read model file {path}: {exc.strerror}") from None
    return from_json(text)
