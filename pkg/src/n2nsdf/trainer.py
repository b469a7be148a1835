"""Noise-to-noise training of an SDF network.

Each iteration samples ``B`` queries around one noisy observation, pulls them
onto the current zero level set and matches the pulled batch one-to-one
against ``B`` points drawn from another observation. The loss is the total
matching distance plus ``lambda`` times the mean hinge violation of

    |f(q)| <= min over pulled points p of ||q - p||

Assignments (and Chamfer nearest neighbours) are recomputed every iteration
and held fixed while differentiating.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import autodiff as ad
from .core import STREAM_TRAIN, ObservationSet, PointCloud, QueryBatch, kth_neighbor_distance, rng_for, \
    sample_queries, sample_target_batch
from .errors import InvalidInput, NumericalFailure
from .field import GRAD_EPS, pull_points
from .network import SdfNetwork, backward_params, bind, graph, init_network
from .transport import EXACT_THRESHOLD, chamfer_match, emd

log = logging.getLogger(__name__)

MODES = ("auto", "multi", "single")
METRICS = ("emd", "cd")


@dataclass
class TrainConfig:
    batch_size: int = 250
    lambda_: float = 0.1
    iterations: int = 20000
    learning_rate: float = 1e-4
    mode: str = "auto"
    exact_emd_threshold: int = EXACT_THRESHOLD
    seed: int = 0
    gc_detach: bool = True
    detach_gradient: bool = False
    metric: str = "emd"
    k_neighbor: int = 50
    hidden_layers: int = 8
    hidden_width: int = 256
    activation: str = "softplus"
    beta: float = 100.0
    init: str = "geometric"
    divergence_factor: float = 1e3

    def __post_init__(self):
        if self.batch_size < 1:
            raise InvalidInput("batch_size must be at least 1")
        if self.lambda_ < 0:
            raise InvalidInput("lambda must be non-negative")
        if self.iterations < 0:
            raise InvalidInput("iterations must be non-negative")
        if not self.learning_rate > 0:
            raise InvalidInput("learning_rate must be positive")
        if self.mode not in MODES:
            raise InvalidInput(f"mode must be one of {MODES}")
        if self.metric not in METRICS:
            raise InvalidInput(f"metric must be one of {METRICS}")


@dataclass
class LossBreakdown:
    emd_term: float
    gc_term: float
    total: float


class Adam:
    def __init__(self, lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps

    def step(self, params, grads, m, v, t: int):
        """One update at (1-based) step ``t``; returns new ``(params, m, v)``."""
        new_p, new_m, new_v = [], [], []
        c1 = 1.0 - self.beta1 ** t
        c2 = 1.0 - self.beta2 ** t
        for p, g, mi, vi in zip(params, grads, m, v):
            mi = self.beta1 * mi + (1.0 - self.beta1) * g
            vi = self.beta2 * vi + (1.0 - self.beta2) * g * g
            new_p.append(p - self.lr * (mi / c1) / (np.sqrt(vi / c2) + self.eps))
            new_m.append(mi)
            new_v.append(vi)
        return new_p, new_m, new_v


@dataclass
class TrainState:
    network: SdfNetwork
    m: list[np.ndarray]
    v: list[np.ndarray]
    iteration: int = 0
    seed: int = 0
    history: list[LossBreakdown] = field(default_factory=list)
    initial_total: float | None = None

    @classmethod
    def fresh(cls, network: SdfNetwork, seed: int = 0) -> "TrainState":
        zeros = [np.zeros_like(p) for p in network.parameters()]
        return cls(network, zeros, [z.copy() for z in zeros], 0, seed)


def pull(net, q) -> np.ndarray:
    """Project one query onto the zero level set of ``net``."""
    return pull_points(net, np.asarray(q, dtype=np.float64)[None, :])[0]


def pull_graph(d: ad.Var, grad: ad.Var, queries: np.ndarray, detach_gradient: bool = False) -> ad.Var:
    norm = ad.clamp_min(ad.row_norm(grad), GRAD_EPS)
    if detach_gradient:
        direction = grad.value / norm.value
        return (d * direction) * -1.0 + queries
    return queries - d * grad / norm


def geometric_consistency(d: ad.Var, pulled: ad.Var, queries: np.ndarray, detach: bool = True) -> ad.Var:
    """Mean hinge of ``|f(q)| - min_p ||q - p||`` over the batch."""
    dist = cdist(queries, pulled.value)
    if detach:
        nearest = dist.min(axis=1, keepdims=True)
        excess = ad.absolute(d) - nearest
    else:
        nearest = ad.row_norm(pulled.take_rows(dist.argmin(axis=1)) * -1.0 + queries)
        excess = ad.absolute(d) - nearest
    return ad.relu(excess).mean()


def compute_loss(net: SdfNetwork, queries: QueryBatch, target: PointCloud, cfg: TrainConfig):
    """Loss breakdown and parameter gradients for one batch."""
    q = np.asarray(queries.queries, dtype=np.float64)
    tgt = target.points
    if len(q) != len(tgt):
        raise InvalidInput(f"query batch ({len(q)}) and target batch ({len(tgt)}) differ in size")
    tape = ad.Tape()
    params = bind(net, tape)
    d, g = graph(net, params, q)
    pulled = pull_graph(d, g, q, cfg.detach_gradient)
    if not np.all(np.isfinite(pulled.value)):
        raise NumericalFailure("network produced non-finite pulled points")

    if cfg.metric == "emd":
        matching = emd(pulled.value, tgt, cfg.exact_emd_threshold)
        fit = ad.row_norm(pulled - tgt[matching.assignment]).sum()
    else:
        cm = chamfer_match(pulled.value, tgt)
        fwd = ad.square(pulled - tgt[cm.src_to_tgt]).sum() * (1.0 / len(q))
        bwd = ad.square(pulled.take_rows(cm.tgt_to_src) * -1.0 + tgt).sum() * (1.0 / len(tgt))
        fit = fwd + bwd

    gc = geometric_consistency(d, pulled, q, cfg.gc_detach)
    loss = fit + gc * cfg.lambda_
    fit_v, gc_v = float(fit.value), float(gc.value)
    breakdown = LossBreakdown(fit_v, gc_v, fit_v + cfg.lambda_ * gc_v)
    if not np.isfinite(breakdown.total):
        raise NumericalFailure(f"non-finite loss (fit={fit_v}, gc={gc_v})")
    return breakdown, backward_params(params, loss)


def loss_step(state: TrainState, queries: QueryBatch, target: PointCloud, cfg: TrainConfig,
              optimizer: Adam | None = None) -> LossBreakdown:
    """Evaluate the loss on one batch and apply one optimizer update to ``state``."""
    breakdown, grads = compute_loss(state.network, queries, target, cfg)
    if state.initial_total is None:
        state.initial_total = breakdown.total
    elif breakdown.total > cfg.divergence_factor * max(state.initial_total, 1e-12):
        raise NumericalFailure(f"loss diverged at iteration {state.iteration}: "
                               f"{breakdown.total:.6g} vs initial {state.initial_total:.6g}")
    optimizer = optimizer or Adam(cfg.learning_rate)
    params, state.m, state.v = optimizer.step(state.network.parameters(), grads, state.m, state.v,
                                              state.iteration + 1)
    state.network = state.network.with_parameters(params)
    state.iteration += 1
    state.history.append(breakdown)
    return breakdown


def train(observations: ObservationSet, cfg: TrainConfig, progress_sink=None,
          state: TrainState | None = None) -> TrainState:
    """Optimize a network on ``observations``; ``progress_sink(iteration, breakdown)`` is optional.

    Passing an existing ``state`` continues training from it.
    """
    n_obs = len(observations)
    mode = cfg.mode if cfg.mode != "auto" else ("single" if n_obs == 1 else "multi")
    if state is None:
        net = init_network(cfg.hidden_layers, cfg.hidden_width, cfg.seed, cfg.activation, cfg.beta,
                           cfg.init)
        state = TrainState.fresh(net, cfg.seed)
    clouds = observations.observations
    scales = [kth_neighbor_distance(c.points, min(cfg.k_neighbor, len(c) - 1)) for c in clouds]
    optimizer = Adam(cfg.learning_rate)
    start = state.iteration
    for it in range(start, start + cfg.iterations):
        rng = rng_for(cfg.seed, STREAM_TRAIN, it)
        if mode == "single":
            i = j = 0
        else:
            i, j = (int(x) for x in rng.integers(0, n_obs, size=2))
        query_seed, target_seed = (int(s) for s in rng.integers(0, 2 ** 63 - 1, size=2))
        k = min(cfg.k_neighbor, len(clouds[i]) - 1)
        queries = sample_queries(clouds[i], cfg.batch_size, k, query_seed, scales[i])
        target = sample_target_batch(clouds[j], cfg.batch_size, target_seed)
        breakdown = loss_step(state, queries, target, cfg, optimizer)
        if progress_sink is not None:
            progress_sink(it, breakdown)
        if it % 1000 == 0:
            log.debug("iter %d fit %.6g gc %.6g", it, breakdown.emd_term, breakdown.gc_term)
    return state
