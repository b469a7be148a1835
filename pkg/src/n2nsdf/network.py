"""Fully connected SDF network ``R^3 -> (-1, 1)`` with analytic input gradients."""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .core import STREAM_INIT, as_points, rng_for
from .errors import CorruptFile, InvalidInput, UnsupportedVersion

MAGIC = b"N2NSDFNT"
FORMAT_VERSION = 1
ACTIVATIONS = ("softplus", "relu")
EVAL_CHUNK = 32768


@dataclass
class SdfNetwork:
    widths: tuple[int, ...]
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    activation: str = "softplus"
    beta: float = 100.0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.widths[0] != 3 or self.widths[-1] != 1:
            raise InvalidInput("network must map 3 inputs to 1 output")
        if self.activation not in ACTIVATIONS:
            raise InvalidInput(f"unknown activation {self.activation!r}")
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.widths[k], self.widths[k + 1]) or b.shape != (self.widths[k + 1],):
                raise InvalidInput(f"layer {k} parameter shapes do not match widths")

    @property
    def n_layers(self) -> int:
        return len(self.weights)

    def parameters(self) -> list[np.ndarray]:
        """Parameters in canonical order ``W0, b0, W1, b1, ...``."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def with_parameters(self, params) -> "SdfNetwork":
        params = [np.array(p, dtype=np.float64) for p in params]
        return SdfNetwork(self.widths, params[0::2], params[1::2], self.activation, self.beta)

    def copy(self) -> "SdfNetwork":
        return self.with_parameters(self.parameters())

    def evaluate(self, points) -> tuple[np.ndarray, np.ndarray]:
        """Signed distances ``(n,)`` and input gradients ``(n, 3)``.

        Rows are processed independently with a fixed accumulation order, so
        a point's result does not depend on which other points share its batch.
        """
        pts = as_points(points)
        values = np.empty(len(pts))
        grads = np.empty((len(pts), 3))
        for start in range(0, len(pts), EVAL_CHUNK):
            sl = slice(start, start + EVAL_CHUNK)
            values[sl], grads[sl] = self._evaluate_chunk(pts[sl])
        return values, grads

    def _evaluate_chunk(self, x):
        slopes = []
        h = x
        for w, b in zip(self.weights[:-1], self.biases[:-1]):
            z = np.einsum("bi,io->bo", h, w) + b
            if self.activation == "softplus":
                h = ad._softplus(z, self.beta)
                slopes.append(ad._sigmoid(self.beta * z))
            else:
                h = np.maximum(z, 0.0)
                slopes.append((z > 0).astype(np.float64))
        d = ad._tanh(np.einsum("bi,io->bo", h, self.weights[-1]) + self.biases[-1])
        g = np.einsum("bo,io->bi", 1.0 - d * d, self.weights[-1])
        for w, s in zip(reversed(self.weights[:-1]), reversed(slopes)):
            g = np.einsum("bo,io->bi", g * s, w)
        return d[:, 0], g

    def __call__(self, points) -> np.ndarray:
        return self.evaluate(points)[0]


@dataclass
class EvalResult:
    value: float
    input_gradient: np.ndarray


INIT_SCHEMES = ("geometric", "uniform")


def init_network(hidden_layers: int, hidden_width: int, seed: int,
                 activation: str = "softplus", beta: float = 100.0,
                 scheme: str = "geometric", radius: float = 0.5) -> SdfNetwork:
    """Random network.

    ``geometric`` starts close to the signed distance of a sphere of ``radius``
    (normal hidden weights with std sqrt(2/width), output weights centred on
    sqrt(pi/width), output bias -radius). ``uniform`` is plain fan-in scaled
    uniform noise.
    """
    if hidden_layers < 1 or hidden_width < 1:
        raise InvalidInput("need at least one hidden layer of width >= 1")
    if scheme not in INIT_SCHEMES:
        raise InvalidInput(f"init scheme must be one of {INIT_SCHEMES}")
    widths = (3,) + (hidden_width,) * hidden_layers + (1,)
    rng = rng_for(seed, STREAM_INIT)
    weights, biases = [], []
    last = len(widths) - 2
    for k in range(len(widths) - 1):
        fan_in, fan_out = widths[k], widths[k + 1]
        if scheme == "geometric":
            if k < last:
                weights.append(rng.normal(0.0, np.sqrt(2.0 / fan_out), size=(fan_in, fan_out)))
                biases.append(np.zeros(fan_out))
            else:
                weights.append(rng.normal(np.sqrt(np.pi / fan_in), 1e-4, size=(fan_in, fan_out)))
                biases.append(np.full(fan_out, -float(radius)))
        else:
            bound = np.sqrt(6.0 / fan_in) if k < last else 1.0 / np.sqrt(fan_in)
            weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
            biases.append(rng.uniform(-1.0 / np.sqrt(fan_in), 1.0 / np.sqrt(fan_in), size=fan_out))
    return SdfNetwork(widths, weights, biases, activation, beta)


def forward(net: SdfNetwork, q) -> EvalResult:
    q = np.asarray(q, dtype=np.float64)
    if q.shape != (3,) or not np.all(np.isfinite(q)):
        raise InvalidInput("query must be a finite 3-vector")
    values, grads = net.evaluate(q[None, :])
    return EvalResult(float(values[0]), grads[0])


# differentiable graph -------------------------------------------------------

def bind(net: SdfNetwork, tape: ad.Tape) -> list[ad.Var]:
    """Register the network parameters as leaves of ``tape``."""
    return [tape.variable(p) for p in net.parameters()]


def graph(net: SdfNetwork, params: list[ad.Var], queries) -> tuple[ad.Var, ad.Var]:
    """Differentiable ``(d, grad_q d)`` of shapes ``(B, 1)`` and ``(B, 3)``.

    The input gradient is built from primal tape operations (the backward
    pass of the MLP written out explicitly), so reverse-mode over the tape
    yields parameter gradients of any loss that uses it.
    """
    ws, bs = params[0::2], params[1::2]
    x = np.asarray(queries, dtype=np.float64)
    slopes = []
    h = x
    for k, (w, b) in enumerate(zip(ws[:-1], bs[:-1])):
        z = (h @ w if k else w.__rmatmul__(h)) + b
        if net.activation == "softplus":
            h = ad.softplus(z, net.beta)
            slopes.append(ad.sigmoid(z, net.beta))
        else:
            h = ad.relu(z)
            slopes.append((z.value > 0).astype(np.float64))
    d = ad.tanh(h @ ws[-1] + bs[-1])
    g = (1.0 - ad.square(d)) @ ws[-1].T
    for w, s in zip(reversed(ws[:-1]), reversed(slopes)):
        g = (g * s) @ w.T
    return d, g


def backward_params(params: list[ad.Var], loss: ad.Var) -> list[np.ndarray]:
    """Gradients of the scalar ``loss`` with respect to every bound parameter."""
    if not isinstance(loss, ad.Var):
        return [np.zeros_like(p.value) for p in params]
    loss.tape.backward(loss)
    return [np.zeros_like(p.value) if p.grad is None else p.grad for p in params]


# checkpoint files -----------------------------------------------------------
# layout: MAGIC | u32 version | u32 header length | JSON header |
#         float64 LE parameters | sha256 of everything before it

def save_network(net: SdfNetwork, path, metadata: dict | None = None) -> None:
    """Write ``net``; ``metadata`` must be JSON serializable and is returned by :func:`load_checkpoint`."""
    header = json.dumps({"widths": list(net.widths), "activation": net.activation,
                         "beta": net.beta, "metadata": metadata or {}}, sort_keys=True).encode("utf-8")
    body = b"".join(np.ascontiguousarray(p, dtype="<f8").tobytes() for p in net.parameters())
    payload = MAGIC + struct.pack("<II", FORMAT_VERSION, len(header)) + header + body
    with open(path, "wb") as fh:
        fh.write(payload + hashlib.sha256(payload).digest())


def load_network(path) -> SdfNetwork:
    return load_checkpoint(path)[0]


def load_checkpoint(path) -> tuple[SdfNetwork, dict]:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 8 + 32 or not blob.startswith(MAGIC):
        raise CorruptFile(f"{path}: not a network checkpoint")
    payload, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptFile(f"{path}: checksum mismatch")
    version, hlen = struct.unpack_from("<II", payload, len(MAGIC))
    if version != FORMAT_VERSION:
        raise UnsupportedVersion(f"{path}: checkpoint version {version}")
    offset = len(MAGIC) + 8
    try:
        header = json.loads(payload[offset:offset + hlen])
        widths = tuple(header["widths"])
    except (ValueError, KeyError) as exc:
        raise CorruptFile(f"{path}: bad header ({exc})") from None
    flat = np.frombuffer(payload[offset + hlen:], dtype="<f8")
    shapes = []
    for k in range(len(widths) - 1):
        shapes += [(widths[k], widths[k + 1]), (widths[k + 1],)]
    if sum(int(np.prod(s)) for s in shapes) != flat.size:
        raise CorruptFile(f"{path}: parameter count does not match the header")
    params, pos = [], 0
    for s in shapes:
        n = int(np.prod(s))
        params.append(flat[pos:pos + n].reshape(s).astype(np.float64))
        pos += n
    net = SdfNetwork(widths, params[0::2], params[1::2], header.get("activation", "softplus"),
                     float(header.get("beta", 100.0)))
    return net, dict(header.get("metadata", {}))
