"""Command line interface: ``n2nsdf <command> [flags]``.

Exit codes: 0 success, 2 usage or I/O problem, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
import warnings

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from .core import NormalizationTransform, ObservationSet, circle_points, make_observation_set, \
    normalize_to_unit_sphere, observation_set_from_clouds
from .errors import ApproximationFailed, EmptyMesh, N2NError, NumericalFailure
from .field import DEFAULT_BOUND, denoise, evaluate_grid, save_grid, upsample
from .fileio import read_cloud, read_mesh, read_ply, write_cloud, write_mesh
from .mesher import TriangleMesh, marching_cubes
from .metrics import DEFAULT_SURFACE_SAMPLES, DEFAULT_TAU, evaluate_report, save_report
from .network import load_checkpoint, save_network
from .oracle import convergence_study, write_study_csv
from .trainer import METRICS, MODES, TrainConfig, train

log = logging.getLogger("n2nsdf")

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3
MESH_SUFFIXES = (".obj",)


class UsageError(Exception):
    pass


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def _ints(text: str) -> list[int]:
    return [int(v) for v in text.split(",") if v.strip()]


def _strs(text: str) -> list[str]:
    return [v.strip() for v in text.split(",") if v.strip()]


def read_config(path) -> dict[str, str]:
    """``key = value`` lines; ``#`` starts a comment; dashes in keys become underscores."""
    out = {}
    try:
        fh = open(path)
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    with fh:
        for n, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = line.partition("=")
            if not sep or not key.strip():
                raise UsageError(f"{path}:{n}: expected key=value")
            out[key.strip().replace("-", "_")] = value.strip()
    return out


# commands -------------------------------------------------------------------

def _observations(args) -> ObservationSet:
    if args.clean:
        clean, transform = normalize_to_unit_sphere(read_cloud(args.clean))
        obs = make_observation_set(clean, args.n_obs, args.noise, args.seed, args.noise_dist)
        return ObservationSet(obs.observations, transform)
    if not args.input:
        raise UsageError("train needs --input files or --clean with noise flags")
    return observation_set_from_clouds([read_cloud(p) for p in args.input])


def _stem(path: str) -> str:
    root, _ = os.path.splitext(path)
    return root


def cmd_train(args) -> int:
    observations = _observations(args)
    cfg = TrainConfig(batch_size=args.batch, lambda_=args.lambda_, iterations=args.iters,
                      learning_rate=args.lr, mode=args.mode, seed=args.seed, metric=args.metric,
                      k_neighbor=args.k, hidden_layers=args.layers, hidden_width=args.width,
                      activation=args.activation, beta=args.beta,
                      exact_emd_threshold=args.exact_threshold)
    every = max(1, args.iters // 20)

    def progress(it, b):
        if it % every == 0:
            log.info("iter %d  fit %.6g  gc %.6g  total %.6g", it, b.emd_term, b.gc_term, b.total)

    state = train(observations, cfg, progress)
    t = observations.normalization
    save_network(state.network, args.output,
                 {"center": [float(c) for c in t.center], "scale": float(t.scale), "seed": args.seed})
    loss_csv = args.loss_csv or _stem(args.output) + ".loss.csv"
    with open(loss_csv, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["iter", "emd", "gc", "total"])
        for it, b in enumerate(state.history):
            writer.writerow([it, repr(b.emd_term), repr(b.gc_term), repr(b.total)])
    if not args.no_figures and state.history:
        from .plotting import plot_loss_curve
        plot_loss_curve(state.history, _stem(loss_csv) + ".png")
    log.info("wrote %s and %s", args.output, loss_csv)
    return EXIT_OK


def _load(path):
    if not os.path.exists(path):
        raise UsageError(f"checkpoint not found: {path}")
    net, meta = load_checkpoint(path)
    transform = NormalizationTransform(np.asarray(meta.get("center", (0.0, 0.0, 0.0)), dtype=np.float64),
                                       float(meta.get("scale", 1.0)))
    return net, transform


def cmd_denoise(args) -> int:
    net, t = _load(args.checkpoint)
    cloud = read_cloud(args.input)
    out = t.invert_cloud(denoise(net, t.apply_cloud(cloud), args.passes))
    write_cloud(args.output, out)
    log.info("denoised %d points -> %s", len(out), args.output)
    return EXIT_OK


def cmd_upsample(args) -> int:
    net, t = _load(args.checkpoint)
    cloud = read_cloud(args.input)
    dense = upsample(net, t.apply_cloud(cloud), args.rate, args.jitter, args.seed, args.passes)
    out = t.invert_cloud(dense)
    write_cloud(args.output, out)
    log.info("upsampled %d -> %d points -> %s", len(cloud), len(out), args.output)
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    net, t = _load(args.checkpoint)
    grid = evaluate_grid(net, args.res, (-args.bound, args.bound))
    if args.grid:
        save_grid(grid, args.grid)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", EmptyMesh)
        mesh = marching_cubes(grid, args.level)
    for w in caught:
        log.warning("%s", w.message)
    mesh = TriangleMesh(t.invert(mesh.vertices), mesh.triangles, mesh.vertex_normals)
    write_mesh(args.output, mesh)
    log.info("mesh with %d vertices, %d triangles -> %s", len(mesh.vertices), len(mesh.triangles), args.output)
    return EXIT_OK


def _read_geometry(path):
    if path.lower().endswith(MESH_SUFFIXES):
        return read_mesh(path), None
    if path.lower().endswith(".ply"):
        obj = read_ply(path)
        return (obj, None) if isinstance(obj, TriangleMesh) else (None, obj)
    return None, read_cloud(path)


def cmd_evaluate(args) -> int:
    recon_mesh, recon_cloud = _read_geometry(args.recon)
    gt_mesh, gt_cloud = _read_geometry(args.gt)
    report = evaluate_report(recon_mesh, recon_cloud, gt_mesh, gt_cloud, args.tau, args.samples, args.seed)
    save_report(report, args.output)
    with open(_stem(args.output) + ".csv", "w") as fh:
        fh.write(report.to_csv())
    if not args.no_figures:
        from .plotting import plot_report
        plot_report(report, _stem(args.output) + ".png")
    print(report.display())
    return EXIT_OK


def cmd_theorem1(args) -> int:
    clean = read_cloud(args.clean) if args.clean else circle_points(args.points)
    rows = convergence_study(clean, args.sigmas, args.n_obs, args.metrics, args.seeds,
                             args.iterations, args.step, args.ground)
    write_study_csv(rows, args.output)
    if not args.no_figures:
        from .plotting import plot_study
        plot_study(rows, _stem(args.output) + ".png")
    for r in rows:
        log.info("sigma %g  N %d  %s  seed %d  residual %.6g", r.sigma, r.n_obs, r.metric, r.seed, r.residual)
    return EXIT_OK


# parser ---------------------------------------------------------------------

def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="key=value file supplying defaults; explicit flags win")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1, help="BLAS threads (1 keeps runs bit-exact)")
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--no-figures", action="store_true", help="skip the PNG figures")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="n2nsdf", description="Learn SDFs from noisy point clouds.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    parser.commands = sub.choices

    p = sub.add_parser("train", help="fit a network to noisy observations")
    _common(p)
    p.add_argument("--input", nargs="+", help="observation clouds (.xyz/.ply)")
    p.add_argument("--clean", help="clean cloud to corrupt with synthetic noise")
    p.add_argument("--noise", type=float, default=0.02, help="noise std in unit-sphere units")
    p.add_argument("--n-obs", type=int, default=1)
    p.add_argument("--noise-dist", choices=("gaussian", "uniform"), default="gaussian")
    p.add_argument("--output", required=True, help="checkpoint path")
    p.add_argument("--loss-csv", help="default: <output stem>.loss.csv")
    p.add_argument("--iters", type=int, default=20000)
    p.add_argument("--batch", type=int, default=250)
    p.add_argument("--lambda", dest="lambda_", type=float, default=0.1)
    p.add_argument("--lr", type=float, default=1e-4)
    p.add_argument("--metric", choices=METRICS, default="emd")
    p.add_argument("--mode", choices=MODES, default="auto")
    p.add_argument("--k", type=int, default=50, help="neighbour rank setting the query spread")
    p.add_argument("--layers", type=int, default=8)
    p.add_argument("--width", type=int, default=256)
    p.add_argument("--activation", choices=("softplus", "relu"), default="softplus")
    p.add_argument("--beta", type=float, default=100.0)
    p.add_argument("--exact-threshold", type=int, default=1024)
    p.set_defaults(func=cmd_train)

    for name, func, text in (("denoise", cmd_denoise, "pull a noisy cloud onto the surface"),
                             ("upsample", cmd_upsample, "densify a sparse cloud")):
        p = sub.add_parser(name, help=text)
        _common(p)
        p.add_argument("--checkpoint", required=True)
        p.add_argument("--input", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--passes", type=int, default=1)
        if name == "upsample":
            p.add_argument("--rate", type=int, default=4)
            p.add_argument("--jitter", type=float, default=0.01, help="copy jitter std, unit-sphere units")
        p.set_defaults(func=func)

    p = sub.add_parser("reconstruct", help="extract a mesh with marching cubes")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--output", required=True, help=".obj or .ply")
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--level", type=float, default=0.0)
    p.add_argument("--bound", type=float, default=DEFAULT_BOUND)
    p.add_argument("--grid", help="also save the sampled grid here")
    p.set_defaults(func=cmd_reconstruct)

    p = sub.add_parser("evaluate", help="compare a reconstruction with ground truth")
    _common(p)
    p.add_argument("--recon", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--output", required=True, help="report file (key=value); CSV and PNG go alongside")
    p.add_argument("--tau", type=float, default=DEFAULT_TAU)
    p.add_argument("--samples", type=int, default=DEFAULT_SURFACE_SAMPLES)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("theorem1", help="free-point convergence study")
    _common(p)
    p.add_argument("--clean", help="clean cloud; default is a circle of --points points")
    p.add_argument("--points", type=int, default=64)
    p.add_argument("--sigmas", type=_floats, default=[0.0, 0.01, 0.02, 0.05])
    p.add_argument("--n-obs", type=_ints, default=[1, 10, 100])
    p.add_argument("--metrics", type=_strs, default=["emd", "cd"])
    p.add_argument("--seeds", type=_ints, default=[0])
    p.add_argument("--iterations", type=int, default=50)
    p.add_argument("--step", type=float, default=0.5)
    p.add_argument("--ground", choices=("sqeuclidean", "euclidean"), default="sqeuclidean")
    p.add_argument("--output", required=True, help="CSV path; PNG goes alongside")
    p.set_defaults(func=cmd_theorem1)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if not getattr(args, "config", None):
        return args
    values = read_config(args.config)
    sub = parser.commands[args.command]
    known = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in values.items():
        action = known.get(key)
        if action is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r} for {args.command}")
        if action.nargs == 0:
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise UsageError(f"config key {key!r} expects a boolean")
            defaults[key] = value.lower() in ("true", "1", "yes")
        elif action.nargs == "+":
            defaults[key] = value.split()
        else:
            defaults[key] = value
    # string defaults go through each action's type; explicit flags still win
    sub.set_defaults(**defaults)
    return parser.parse_args(argv)


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except UsageError as exc:
        print(f"n2nsdf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        with threadpool_limits(limits=max(1, args.threads)):
            return args.func(args)
    except (NumericalFailure, ApproximationFailed) as exc:
        print(f"n2nsdf: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (UsageError, N2NError, OSError) as exc:
        print(f"n2nsdf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
