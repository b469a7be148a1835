"""A small reverse-mode autodiff over numpy arrays.

Only the operations needed by the SDF network and its losses are provided.
Every :class:`Var` belongs to a :class:`Tape` that records nodes in creation
order, so a single reverse sweep over the tape visits each node once after
all of its consumers.

Second derivatives are obtained without nesting tapes: the input gradient of
the network is itself written as ordinary primal operations (see
``network.graph``), and the reverse sweep then differentiates through it.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit

from .errors import InvalidInput


class Tape:
    def __init__(self):
        self.nodes: list[Var] = []

    def variable(self, value) -> "Var":
        """Leaf node whose adjoint is collected by :meth:`backward`."""
        return Var(self, np.asarray(value, dtype=np.float64))

    def backward(self, root: "Var") -> None:
        if root.tape is not self:
            raise InvalidInput("root does not belong to this tape")
        if root.value.size != 1:
            raise InvalidInput("backward needs a scalar root")
        for node in self.nodes:
            node.grad = None
        root.grad = np.ones_like(root.value)
        for node in reversed(self.nodes[: root.index + 1]):
            if node.grad is None or node.vjp is None:
                continue
            for parent, g in zip(node.parents, node.vjp(node.grad)):
                if parent is None or g is None:
                    continue
                parent.grad = g if parent.grad is None else parent.grad + g


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for axis, n in enumerate(shape):
        if n == 1 and g.shape[axis] != 1:
            g = g.sum(axis=axis, keepdims=True)
    return g


def _matmul_vjp(g, a, b):
    """Adjoints of ``a @ b`` for 1-D or 2-D operands."""
    a2 = a if a.ndim == 2 else a[None, :]
    b2 = b if b.ndim == 2 else b[:, None]
    g2 = np.reshape(g, (a2.shape[0], b2.shape[1]))
    return (g2 @ b2.T).reshape(a.shape), (a2.T @ g2).reshape(b.shape)


def _lift(tape: Tape, x):
    return x if isinstance(x, Var) else None, (x.value if isinstance(x, Var) else np.asarray(x, dtype=np.float64))


class Var:
    __slots__ = ("tape", "value", "parents", "vjp", "grad", "index")
    __array_ufunc__ = None

    def __init__(self, tape: Tape, value: np.ndarray, parents=(), vjp=None):
        self.tape = tape
        self.value = value
        self.parents = parents
        self.vjp = vjp
        self.grad = None
        self.index = len(tape.nodes)
        tape.nodes.append(self)

    @property
    def shape(self):
        return self.value.shape

    def _new(self, value, parents, vjp) -> "Var":
        return Var(self.tape, value, parents, vjp)

    # arithmetic -----------------------------------------------------------
    def __add__(self, other):
        o, ov = _lift(self.tape, other)
        sa, sb = self.value.shape, ov.shape
        return self._new(self.value + ov, (self, o),
                         lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))

    __radd__ = __add__

    def __neg__(self):
        return self._new(-self.value, (self,), lambda g: (-g,))

    def __sub__(self, other):
        o, ov = _lift(self.tape, other)
        sa, sb = self.value.shape, ov.shape
        return self._new(self.value - ov, (self, o),
                         lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        o, ov = _lift(self.tape, other)
        a = self.value
        return self._new(a * ov, (self, o),
                         lambda g: (_unbroadcast(g * ov, a.shape), _unbroadcast(g * a, ov.shape)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o, ov = _lift(self.tape, other)
        a = self.value
        out = a / ov
        return self._new(out, (self, o),
                         lambda g: (_unbroadcast(g / ov, a.shape),
                                    _unbroadcast(-g * out / ov, ov.shape)))

    def __matmul__(self, other):
        o, ov = _lift(self.tape, other)
        a = self.value
        return self._new(a @ ov, (self, o), lambda g: _matmul_vjp(g, a, ov))

    def __rmatmul__(self, other):
        ov = np.asarray(other, dtype=np.float64)
        b = self.value
        return self._new(ov @ b, (None, self), lambda g: (None, _matmul_vjp(g, ov, b)[1]))

    @property
    def T(self):
        return self._new(self.value.T, (self,), lambda g: (g.T,))

    # reductions and indexing ---------------------------------------------
    def sum(self, axis=None, keepdims=False):
        shape = self.value.shape

        def vjp(g):
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            return (np.broadcast_to(g, shape).copy(),)

        return self._new(np.asarray(self.value.sum(axis=axis, keepdims=keepdims)), (self,), vjp)

    def mean(self):
        return self.sum() * (1.0 / self.value.size)

    def take_rows(self, idx):
        idx = np.asarray(idx)
        shape = self.value.shape

        def vjp(g):
            out = np.zeros(shape)
            np.add.at(out, idx, g)
            return (out,)

        return self._new(self.value[idx], (self,), vjp)


# elementwise functions -----------------------------------------------------

TANH_MAX = np.nextafter(1.0, 0.0)


def _tanh(z: np.ndarray) -> np.ndarray:
    """tanh kept strictly inside (-1, 1) (float64 tanh saturates to exactly 1 near 19.1)."""
    return np.clip(np.tanh(z), -TANH_MAX, TANH_MAX)


def tanh(x: Var) -> Var:
    y = _tanh(x.value)
    return x._new(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Var, beta: float = 1.0) -> Var:
    """``1 / (1 + exp(-beta x))``."""
    s = _sigmoid(beta * x.value)
    return x._new(s, (x,), lambda g: (g * beta * s * (1.0 - s),))


def softplus(x: Var, beta: float = 1.0) -> Var:
    """``log(1 + exp(beta x)) / beta``; derivative is ``sigmoid(x, beta)``."""
    y = _softplus(x.value, beta)
    s = _sigmoid(beta * x.value)
    return x._new(y, (x,), lambda g: (g * s,))


def relu(x: Var) -> Var:
    mask = x.value > 0
    return x._new(np.where(mask, x.value, 0.0), (x,), lambda g: (g * mask,))


def absolute(x: Var) -> Var:
    sign = np.sign(x.value)
    return x._new(np.abs(x.value), (x,), lambda g: (g * sign,))


def square(x: Var) -> Var:
    v = x.value
    return x._new(v * v, (x,), lambda g: (2.0 * g * v,))


def clamp_min(x: Var, floor: float) -> Var:
    mask = x.value > floor
    return x._new(np.where(mask, x.value, floor), (x,), lambda g: (g * mask,))


def row_norm(x: Var) -> Var:
    """Euclidean norm of every row, shape ``(n, 1)``; subgradient 0 at the origin."""
    v = x.value
    n = np.sqrt(np.sum(v * v, axis=1, keepdims=True))
    safe = np.where(n > 0, n, 1.0)
    return x._new(n, (x,), lambda g: (g * np.where(n > 0, v / safe, 0.0),))


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return expit(z)


def _softplus(z: np.ndarray, beta: float) -> np.ndarray:
    bz = beta * z
    return (np.maximum(bz, 0.0) + np.log1p(np.exp(-np.abs(bz)))) / beta
