import io

import numpy as np
import pytest

from n2nsdf.core import PointCloud, circle_points, make_observation_set
from n2nsdf.errors import InvalidInput, NumericalFailure
from n2nsdf.metrics import l2_chamfer
from n2nsdf.oracle import (STUDY_COLUMNS, StudyRow, convergence_study, objective, optimize_free_points,
                           read_study_csv, rows_as_tuples, write_study_csv)


def test_single_point_settles_on_mean():
    rng = np.random.default_rng(0)
    obs = [rng.normal(loc=[1.0, -2.0, 0.5], scale=0.3, size=(1, 3)) for _ in range(40)]
    g = optimize_free_points(obs, "emd").points[0]
    assert np.max(np.abs(g - np.mean(obs, axis=0)[0])) < 1e-6


def test_noiseless_is_fixed_point():
    clean = circle_points(32)
    obs = make_observation_set(clean, 5, 0.0, seed=0)
    for metric in ("emd", "cd"):
        g = optimize_free_points(obs, metric)
        assert l2_chamfer(g, clean) < 1e-10


def test_two_points_recovered():
    truth = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0]])
    obs = make_observation_set(PointCloud(truth), 200, 0.01, seed=3)
    g = optimize_free_points(obs, "emd").points
    g = g[np.argsort(g[:, 0])]
    assert np.max(np.abs(g - truth)) < 5e-3


def test_emd_residual_shrinks_with_more_observations():
    clean = circle_points(32)
    means = []
    for n in (1, 4, 16, 64):
        rows = convergence_study(clean, [0.05], [n], ("emd",), seeds=range(5))
        means.append(np.mean([r.residual for r in rows]))
    assert all(b <= a for a, b in zip(means, means[1:])), means


def test_emd_beats_chamfer_on_circle():
    rows = convergence_study(circle_points(64), [0.05], [100], seeds=(0,))
    res = {r.metric: r.residual for r in rows}
    assert res["emd"] < 0.5 * res["cd"]


def test_objective_does_not_increase():
    obs = make_observation_set(circle_points(24), 6, 0.05, seed=1).observations
    pts = [o.points for o in obs]
    start = objective(pts[0], pts, "emd", "sqeuclidean")
    g = optimize_free_points(obs, "emd", iterations=3)
    assert objective(g.points, pts, "emd", "sqeuclidean") <= start


def test_euclidean_ground_runs():
    obs = make_observation_set(circle_points(16), 8, 0.05, seed=2)
    g = optimize_free_points(obs, "emd", ground="euclidean", iterations=20)
    assert len(g) == 16 and np.all(np.isfinite(g.points))


def test_divergence_and_validation():
    obs = make_observation_set(circle_points(8), 3, 0.05, seed=0)
    with pytest.raises(NumericalFailure):
        optimize_free_points(obs, "emd", step=5.0)
    with pytest.raises(InvalidInput):
        optimize_free_points([np.zeros((3, 3)), np.zeros((4, 3))])
    with pytest.raises(InvalidInput):
        optimize_free_points(obs, "l1")
    with pytest.raises(InvalidInput):
        optimize_free_points(obs, ground="manhattan")
    with pytest.raises(InvalidInput):
        optimize_free_points(obs, iterations=0)
    with pytest.raises(InvalidInput):
        convergence_study(circle_points(8), [], [1])


def test_study_csv_roundtrip(tmp_path):
    rows = convergence_study(circle_points(8), [0.0, 0.02], [1, 3], seeds=(0, 1), iterations=5)
    assert len(rows) == 2 * 2 * 2 * 2
    path = tmp_path / "study.csv"
    write_study_csv(rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == ",".join(STUDY_COLUMNS) == "sigma,n_obs,metric,residual,seed"
    assert rows_as_tuples(read_study_csv(path)) == rows_as_tuples(rows)
    buf = io.StringIO()
    write_study_csv(rows, buf)
    assert buf.getvalue() == path.read_text()
    zero = [r for r in rows if r.sigma == 0.0]
    assert zero and all(r.residual < 1e-20 for r in zero)


def test_study_bad_header(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("a,b\n1,2\n")
    with pytest.raises(InvalidInput):
        read_study_csv(p)
    assert StudyRow(0.1, 2, "emd", 0.5, 0).n_obs == 2
