"""One-to-one (EMD) and nearest-neighbour (Chamfer) matchings between point sets.

The ground cost is the plain Euclidean distance unless ``ground="sqeuclidean"``
is requested. Matching costs are summed with :func:`math.fsum`, so the
reported cost of a given assignment does not depend on summation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import as_points, nearest_neighbors
from .errors import ApproximationFailed, InvalidInput

EXACT_THRESHOLD = 1024
GROUNDS = ("euclidean", "sqeuclidean")
APPROX_TOLERANCE = 0.01


@dataclass
class Matching:
    assignment: np.ndarray  # source index -> target index
    cost: float


@dataclass
class ChamferMatch:
    src_to_tgt: np.ndarray
    tgt_to_src: np.ndarray
    cost: float


def _pair_arrays(src, tgt):
    a = as_points(getattr(src, "points", src))
    b = as_points(getattr(tgt, "points", tgt))
    if len(a) != len(b):
        raise InvalidInput(f"EMD needs equal sizes, got {len(a)} and {len(b)}")
    if len(a) == 0:
        raise InvalidInput("EMD of empty sets")
    return a, b


def cost_matrix(a: np.ndarray, b: np.ndarray, ground: str = "euclidean") -> np.ndarray:
    sq = np.sum((a[:, None, :] - b[None, :, :]) ** 2, axis=-1)
    if ground == "sqeuclidean":
        return sq
    if ground == "euclidean":
        return np.sqrt(sq)
    raise InvalidInput(f"unknown ground cost {ground!r}, expected one of {GROUNDS}")


def assignment_cost(a, b, assignment, ground: str = "euclidean") -> float:
    sq = np.sum((a - b[assignment]) ** 2, axis=1)
    return math.fsum(np.sqrt(sq) if ground == "euclidean" else sq)


def emd_exact(src, tgt, ground: str = "euclidean") -> Matching:
    """Globally optimal bijection (Jonker-Volgenant via scipy)."""
    a, b = _pair_arrays(src, tgt)
    rows, cols = linear_sum_assignment(cost_matrix(a, b, ground))
    assignment = np.empty(len(a), dtype=np.int64)
    assignment[rows] = cols
    return Matching(assignment, assignment_cost(a, b, assignment, ground))


def emd_approx(src, tgt, max_iters: int = 100000, ground: str = "euclidean",
               tolerance: float = APPROX_TOLERANCE) -> Matching:
    """Auction algorithm with epsilon scaling.

    The final epsilon is chosen so that ``B * eps`` stays below ``tolerance``
    times a lower bound of the optimal cost, which bounds the result by
    ``(1 + tolerance)`` times the optimum. ``max_iters`` caps the total
    number of bidding rounds over all scaling phases.
    """
    a, b = _pair_arrays(src, tgt)
    n = len(a)
    benefit = -cost_matrix(a, b, ground)
    spread = float(benefit.max() - benefit.min())
    if n == 1 or spread == 0.0:
        assignment = np.arange(n)
        return Matching(assignment, assignment_cost(a, b, assignment, ground))
    lower = float(np.sum(-benefit.max(axis=1)))
    eps_final = max(tolerance * lower / n, 1e-12 * spread / n)
    eps = max(spread / 4.0, eps_final)

    prices = np.zeros(n)
    rounds = 0
    while True:
        owner = np.full(n, -1)  # object -> person
        assigned = np.full(n, -1)  # person -> object
        while True:
            free = np.nonzero(assigned < 0)[0]
            if free.size == 0:
                break
            rounds += 1
            if rounds > max_iters:
                raise ApproximationFailed(f"auction did not converge within {max_iters} rounds")
            values = benefit[free] - prices
            top2 = np.argpartition(values, -2, axis=1)[:, -2:]
            v_a = values[np.arange(free.size), top2[:, 0]]
            v_b = values[np.arange(free.size), top2[:, 1]]
            best = np.where(v_b >= v_a, top2[:, 1], top2[:, 0])
            gap = np.abs(v_b - v_a)
            bids = prices[best] + gap + eps
            # highest bid per object wins; ties go to the lowest person index
            order = np.lexsort((free, -bids, best))
            first = np.ones(order.size, dtype=bool)
            first[1:] = best[order][1:] != best[order][:-1]
            win = order[first]
            objs = best[win]
            persons = free[win]
            previous = owner[objs]
            assigned[previous[previous >= 0]] = -1
            owner[objs] = persons
            assigned[persons] = objs
            prices[objs] = bids[win]
        if eps <= eps_final:
            break
        eps = max(eps / 5.0, eps_final)
    return Matching(assigned, assignment_cost(a, b, assigned, ground))


def emd(src, tgt, exact_threshold: int = EXACT_THRESHOLD, ground: str = "euclidean",
        fallback: bool = True) -> Matching:
    """Exact matching for small batches, auction above ``exact_threshold``."""
    a, b = _pair_arrays(src, tgt)
    if len(a) <= exact_threshold:
        return emd_exact(a, b, ground)
    try:
        return emd_approx(a, b, ground=ground)
    except ApproximationFailed:
        if not fallback:
            raise
        return emd_exact(a, b, ground)


def chamfer_match(src, tgt) -> ChamferMatch:
    """Nearest neighbours in both directions; cost is the sum-of-means squared distance."""
    a = as_points(getattr(src, "points", src))
    b = as_points(getattr(tgt, "points", tgt))
    if len(a) == 0 or len(b) == 0:
        raise InvalidInput("Chamfer distance of an empty set")
    da, ia = nearest_neighbors(a, b)
    db, ib = nearest_neighbors(b, a)
    return ChamferMatch(ia, ib, float(np.mean(da ** 2) + np.mean(db ** 2)))
