"""Evaluation metrics.

Conventions:

* L2 Chamfer is the *sum of means* of squared nearest-neighbour distances.
* L1 Chamfer is *half the sum of means* of unsquared distances.
* P2M is the mean *squared* point-to-mesh distance.

Raw values are stored everywhere; the customary x1e4 display scaling is
applied only when formatting a report.
"""

from __future__ import annotations

import csv
import io
from dataclasses import asdict, dataclass, fields

import numpy as np

from .core import PointCloud, as_points, nearest_neighbors
from .errors import CorruptFile, InvalidInput
from .mesher import MeshDistance, TriangleMesh

DEFAULT_TAU = 0.01
DEFAULT_SURFACE_SAMPLES = 100_000


def _pts(cloud) -> np.ndarray:
    pts = as_points(getattr(cloud, "points", cloud))
    if len(pts) == 0:
        raise InvalidInput("metric of an empty point set")
    return pts


def _nn_dist(a, b) -> tuple[np.ndarray, np.ndarray]:
    return nearest_neighbors(a, b)[0], nearest_neighbors(b, a)[0]


def l2_chamfer(a, b) -> float:
    da, db = _nn_dist(_pts(a), _pts(b))
    return float(np.mean(da ** 2) + np.mean(db ** 2))


def l1_chamfer(a, b) -> float:
    da, db = _nn_dist(_pts(a), _pts(b))
    return float(0.5 * (np.mean(da) + np.mean(db)))


def p2m(points, mesh: TriangleMesh) -> float:
    d = MeshDistance(mesh)(_pts(points))
    return float(np.mean(d ** 2))


def normal_consistency(a: PointCloud, b: PointCloud) -> float:
    """Symmetric mean of ``|n_x . n_nn(x)|`` over nearest-neighbour pairs."""
    if a.normals is None or b.normals is None:
        raise InvalidInput("normal consistency needs normals on both clouds")
    _, ia = nearest_neighbors(a.points, b.points)
    _, ib = nearest_neighbors(b.points, a.points)
    ab = np.abs(np.einsum("ij,ij->i", a.normals, b.normals[ia]))
    ba = np.abs(np.einsum("ij,ij->i", b.normals, a.normals[ib]))
    return float(0.5 * (ab.mean() + ba.mean()))


def f_score(recon, gt, tau: float = DEFAULT_TAU) -> float:
    da, db = _nn_dist(_pts(recon), _pts(gt))
    precision = float(np.mean(da <= tau))
    recall = float(np.mean(db <= tau))
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


@dataclass
class MetricsReport:
    l2cd: float
    l1cd: float
    p2m: float
    normal_consistency: float
    f_score: float
    tau: float
    n_recon: int
    n_gt: int

    def to_text(self) -> str:
        return "".join(f"{k}={v!r}\n" for k, v in asdict(self).items())

    @classmethod
    def from_text(cls, text: str) -> "MetricsReport":
        raw = {}
        for line in text.splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise CorruptFile(f"bad report line: {line!r}")
            raw[key.strip()] = value.strip()
        try:
            return cls(**{f.name: (int if f.type in ("int", int) else float)(raw[f.name]) for f in fields(cls)})
        except (KeyError, ValueError) as exc:
            raise CorruptFile(f"incomplete report: {exc}") from None

    def csv_header(self) -> str:
        return ",".join(f.name for f in fields(self))

    def csv_row(self) -> str:
        return ",".join(repr(v) for v in asdict(self).values())

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow([f.name for f in fields(self)])
        writer.writerow([repr(v) for v in asdict(self).values()])
        return buf.getvalue()

    def display(self) -> str:
        return (f"L2CD x1e4 {self.l2cd * 1e4:.3f}  L1CD x10 {self.l1cd * 10:.4f}  "
                f"P2M x1e4 {self.p2m * 1e4:.3f}  NC {self.normal_consistency:.4f}  "
                f"F@{self.tau:g} {self.f_score:.4f}")


def save_report(report: MetricsReport, path) -> None:
    with open(path, "w") as fh:
        fh.write(report.to_text())


def load_report(path) -> MetricsReport:
    with open(path) as fh:
        return MetricsReport.from_text(fh.read())


def _as_cloud(obj, n_samples: int, seed: int) -> PointCloud:
    if isinstance(obj, TriangleMesh):
        return obj.sample_surface(n_samples, seed)
    return obj


def evaluate_report(recon_mesh: TriangleMesh | None, recon_cloud: PointCloud | None,
                    gt_mesh: TriangleMesh | None, gt_cloud: PointCloud | None,
                    tau: float = DEFAULT_TAU, n_samples: int = DEFAULT_SURFACE_SAMPLES,
                    seed: int = 0) -> MetricsReport:
    """Bundle every metric for a reconstruction against a ground truth.

    Missing clouds are sampled from the corresponding mesh (area weighted,
    same seed for both sides). P2M uses the ground-truth mesh when available;
    otherwise it is reported as NaN. NC is NaN when either side has no normals.
    """
    recon = recon_cloud if recon_cloud is not None else _as_cloud(recon_mesh, n_samples, seed)
    gt = gt_cloud if gt_cloud is not None else _as_cloud(gt_mesh, n_samples, seed)
    if recon is None or gt is None:
        raise InvalidInput("need a mesh or a cloud on both sides")
    nc = normal_consistency(recon, gt) if recon.has_normals and gt.has_normals else float("nan")
    return MetricsReport(
        l2cd=l2_chamfer(recon, gt),
        l1cd=l1_chamfer(recon, gt),
        p2m=p2m(recon, gt_mesh) if gt_mesh is not None else float("nan"),
        normal_consistency=nc,
        f_score=f_score(recon, gt, tau),
        tau=float(tau),
        n_recon=len(recon),
        n_gt=len(gt),
    )
