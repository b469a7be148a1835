"""Network-free check of the noise-to-noise statistics.

A free point set ``G'`` is optimized directly against noisy observations
``N_1 .. N_n`` by minimizing ``sum_i L(G', N_i)``, where ``L`` is either the
optimal one-to-one matching cost or the Chamfer distance. With one-to-one
matching ``G'`` should settle on the clean points; Chamfer does not.

The update is a majorize-minimize step: with the correspondences frozen,
every point of ``G'`` moves ``step * 2`` of the way toward the weighted mean
of the observation points currently attached to it. For the squared ground
cost the weights are 1 and ``step=0.5`` jumps straight to that mean. For the
unsquared cost the weights are ``1 / distance`` (Weiszfeld).
"""

from __future__ import annotations

import csv
import math
from dataclasses import astuple, dataclass, fields

import numpy as np
from scipy.spatial import cKDTree

from .core import ObservationSet, PointCloud, make_observation_set
from .errors import InvalidInput, NumericalFailure
from .metrics import l2_chamfer
from .transport import GROUNDS, emd_exact

ORACLE_METRICS = ("emd", "cd")
DIVERGENCE_FACTOR = 10.0
_WEISZFELD_EPS = 1e-12


def _costs(diff: np.ndarray, ground: str) -> np.ndarray:
    sq = np.einsum("ij,ij->i", diff, diff)
    return sq if ground == "sqeuclidean" else np.sqrt(sq)


def _weights(diff: np.ndarray, ground: str) -> np.ndarray:
    if ground == "sqeuclidean":
        return np.ones(len(diff))
    return 1.0 / np.maximum(np.sqrt(np.einsum("ij,ij->i", diff, diff)), _WEISZFELD_EPS)


def _pairs(g: np.ndarray, obs: np.ndarray, metric: str, ground: str):
    """Index pairs ``(k into G', j into obs)`` that make up ``L(G', obs)``."""
    if metric == "emd":
        m = emd_exact(g, obs, ground)
        return np.arange(len(g)), m.assignment
    _, fwd = cKDTree(obs).query(g)
    _, bwd = cKDTree(g).query(obs)
    return (np.concatenate([np.arange(len(g)), bwd]),
            np.concatenate([fwd, np.arange(len(obs))]))


def objective(g: np.ndarray, observations: list[np.ndarray], metric: str, ground: str) -> float:
    total = []
    for obs in observations:
        k, j = _pairs(g, obs, metric, ground)
        total.extend(_costs(g[k] - obs[j], ground))
    return math.fsum(total)


def optimize_free_points(observations, metric: str = "emd", iterations: int = 50, step: float = 0.5,
                         seed: int = 0, ground: str = "sqeuclidean", tol: float = 0.0) -> PointCloud:
    """Optimize ``G'`` (initialized to the first observation) against all observations.

    Stops early once no point moves by more than ``tol``. ``seed`` is accepted
    for interface symmetry; the procedure itself is deterministic.
    """
    del seed
    clouds = observations.observations if isinstance(observations, ObservationSet) else list(observations)
    obs = [np.asarray(getattr(c, "points", c), dtype=np.float64) for c in clouds]
    if not obs:
        raise InvalidInput("no observations given")
    m = len(obs[0])
    if any(o.shape != (m, 3) for o in obs):
        raise InvalidInput("all observations must have the same number of points")
    if metric not in ORACLE_METRICS:
        raise InvalidInput(f"metric must be one of {ORACLE_METRICS}")
    if ground not in GROUNDS:
        raise InvalidInput(f"ground must be one of {GROUNDS}")
    if iterations < 1:
        raise InvalidInput("iterations must be at least 1")
    if not step > 0:
        raise InvalidInput("step must be positive")

    g = obs[0].copy()
    initial = None
    for _ in range(iterations):
        pull = np.zeros_like(g)
        weight = np.zeros(m)
        cost = []
        for o in obs:
            k, j = _pairs(g, o, metric, ground)
            diff = g[k] - o[j]
            w = _weights(diff, ground)
            np.add.at(pull, k, w[:, None] * diff)
            np.add.at(weight, k, w)
            cost.extend(_costs(diff, ground))
        cost = math.fsum(cost)
        if initial is None:
            initial = cost
        elif cost > DIVERGENCE_FACTOR * max(initial, 1e-300):
            raise NumericalFailure(f"free-point objective diverged: {cost:.6g} vs initial {initial:.6g}")
        move = 2.0 * step * pull / np.maximum(weight, 1e-300)[:, None]
        if not np.all(np.isfinite(move)):
            raise NumericalFailure("non-finite free-point update")
        g = g - move
        if np.max(np.abs(move)) <= tol:
            break
    return PointCloud(g)


@dataclass(frozen=True)
class StudyRow:
    sigma: float
    n_obs: int
    metric: str
    residual: float
    seed: int


STUDY_COLUMNS = tuple(f.name for f in fields(StudyRow))


def convergence_study(clean: PointCloud, sigmas, n_obs_list, metrics=ORACLE_METRICS, seeds=(0,),
                      iterations: int = 50, step: float = 0.5, ground: str = "sqeuclidean") -> list[StudyRow]:
    """Residual ``L2CD(G', G)`` for every (sigma, N, metric, seed) cell."""
    if isinstance(metrics, str):
        metrics = (metrics,)
    if isinstance(seeds, int):
        seeds = (seeds,)
    if not sigmas or not n_obs_list or not metrics or not seeds:
        raise InvalidInput("empty study grid")
    if any(s < 0 for s in sigmas) or any(n < 1 for n in n_obs_list):
        raise InvalidInput("sigmas must be >= 0 and observation counts >= 1")
    rows = []
    for sigma in sigmas:
        for n in n_obs_list:
            for seed in seeds:
                obs = make_observation_set(clean, int(n), float(sigma), int(seed))
                for metric in metrics:
                    g = optimize_free_points(obs, metric, iterations, step, seed, ground)
                    rows.append(StudyRow(float(sigma), int(n), metric, l2_chamfer(g, clean), int(seed)))
    return rows


def write_study_csv(rows: list[StudyRow], path_or_file) -> None:
    own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
    fh = open(path_or_file, "w", newline="") if own else path_or_file
    try:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(STUDY_COLUMNS)
        for r in rows:
            writer.writerow([repr(r.sigma), r.n_obs, r.metric, repr(r.residual), r.seed])
    finally:
        if own:
            fh.close()


def read_study_csv(path) -> list[StudyRow]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if tuple(header or ()) != STUDY_COLUMNS:
            raise InvalidInput(f"{path}: unexpected study header {header}")
        return [StudyRow(float(s), int(n), m, float(r), int(sd)) for s, n, m, r, sd in reader]


def rows_as_tuples(rows: list[StudyRow]) -> list[tuple]:
    return [astuple(r) for r in rows]
