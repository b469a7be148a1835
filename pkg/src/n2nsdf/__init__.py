"""Signed distance fields learned from noisy point clouds by noise-to-noise mapping."""

__version__ = "0.1.0"

from .core import ObservationSet, PointCloud, circle_points, make_observation_set, normalize_to_unit_sphere, \
    observation_set_from_clouds, sphere_points
from .errors import ApproximationFailed, CorruptFile, EmptyMesh, InvalidInput, N2NError, NumericalFailure, \
    UnsupportedVersion
from .field import denoise, evaluate_grid, level_set_points, pull_points, upsample
from .mesher import TriangleMesh, marching_cubes
from .metrics import MetricsReport, evaluate_report, f_score, l1_chamfer, l2_chamfer, normal_consistency, p2m
from .network import SdfNetwork, init_network, load_checkpoint, load_network, save_network
from .oracle import convergence_study, optimize_free_points
from .trainer import TrainConfig, TrainState, train
from .transport import chamfer_match, emd, emd_approx, emd_exact

__all__ = [
    "ApproximationFailed", "CorruptFile", "EmptyMesh", "InvalidInput", "MetricsReport", "N2NError",
    "NumericalFailure", "ObservationSet", "PointCloud", "SdfNetwork", "TrainConfig", "TrainState",
    "TriangleMesh", "UnsupportedVersion", "chamfer_match", "circle_points", "convergence_study", "denoise", "emd",
    "emd_approx", "emd_exact", "evaluate_grid", "evaluate_report", "f_score", "init_network",
    "l1_chamfer", "l2_chamfer", "level_set_points", "load_checkpoint", "load_network", "make_observation_set",
    "marching_cubes", "normal_consistency", "normalize_to_unit_sphere", "observation_set_from_clouds",
    "optimize_free_points", "p2m", "pull_points", "save_network", "sphere_points", "train", "upsample",
]
