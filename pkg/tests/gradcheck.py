"""Central finite-difference references shared by the gradient tests."""

import numpy as np

from n2nsdf import autodiff as ad
from n2nsdf.network import bind, graph, init_network


def rel_err(a, b, floor=1e-6):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), floor))


def central_input_gradient(net, q, h=1e-4):
    out = np.zeros(3)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out[k] = (net(q + e)[0] - net(q - e)[0]) / (2 * h)
    return out


def fd_input_gradient(net, q, h=1e-4):
    """Richardson-extrapolated central difference; the plain O(h^2) stencil is
    too coarse for sharp softplus (beta=100) at h=1e-4."""
    return (4 * central_input_gradient(net, q, h / 2) - central_input_gradient(net, q, h)) / 3


def random_net(rng, beta=None, scheme=None):
    layers = int(rng.integers(1, 4))
    width = int(rng.integers(2, 17))
    beta = float(rng.uniform(2.0, 20.0)) if beta is None else beta
    scheme = scheme or ("geometric" if rng.random() < 0.5 else "uniform")
    return init_network(layers, width, int(rng.integers(0, 2**31)), "softplus", beta, scheme)


def second_order_loss(net, q):
    """sum f(q)^2 + sum |grad_q f(q)|^2 evaluated without the tape."""
    v, g = net.evaluate(q)
    return float(np.sum(v * v) + np.sum(g * g))


def second_order_graph_grads(net, q):
    tape = ad.Tape()
    params = bind(net, tape)
    d, g = graph(net, params, q)
    loss = ad.square(d).sum() + ad.square(g).sum()
    tape.backward(loss)
    return [p.grad for p in params]


def _central_params(net, loss_fn, entries, h):
    params = net.parameters()
    out = []
    for pi, fi in entries:
        vals = []
        for sgn in (1.0, -1.0):
            ps = [p.copy() for p in params]
            ps[pi].reshape(-1)[fi] += sgn * h
            vals.append(loss_fn(net.with_parameters(ps)))
        out.append((vals[0] - vals[1]) / (2 * h))
    return np.array(out)


def fd_param_entries(net, loss_fn, entries, h=1e-5):
    """Richardson-extrapolated central differences of ``loss_fn(net)`` for
    ``(param index, flat index)`` pairs."""
    return (4 * _central_params(net, loss_fn, entries, h / 2) - _central_params(net, loss_fn, entries, h)) / 3


def sample_entries(net, rng, n=20):
    params = net.parameters()
    sizes = np.array([p.size for p in params])
    flat = rng.choice(int(sizes.sum()), size=min(n, int(sizes.sum())), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    entries = []
    for f in flat:
        pi = int(np.searchsorted(offsets, f, side="right") - 1)
        entries.append((pi, int(f - offsets[pi])))
    return entries
