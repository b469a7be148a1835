import time

import numpy as np
import pytest

from n2nsdf.cli import EXIT_NUMERIC, EXIT_OK, EXIT_USAGE, build_parser, main
from n2nsdf.core import PointCloud, sphere_points
from n2nsdf.errors import NumericalFailure
from n2nsdf.fileio import read_cloud, read_mesh, write_cloud
from n2nsdf.metrics import load_report
from n2nsdf.network import init_network, save_network
from n2nsdf.oracle import STUDY_COLUMNS, read_study_csv

TINY = ["--layers", "2", "--width", "16", "--iters", "20", "--batch", "32", "--k", "10", "--no-figures"]


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    write_cloud(d / "clean.xyz", PointCloud(sphere_points(300).points * 3.0 + 1.0))
    assert main(["train", "--clean", str(d / "clean.xyz"), "--output", str(d / "net.json"), *TINY]) == EXIT_OK
    return d


def test_train_writes_checkpoint_and_loss(workdir):
    lines = (workdir / "net.loss.csv").read_text().splitlines()
    assert lines[0] == "iter,emd,gc,total"
    assert len(lines) == 21
    assert (workdir / "net.json").exists()


def test_train_is_deterministic(workdir, tmp_path):
    out = tmp_path / "again.json"
    assert main(["train", "--clean", str(workdir / "clean.xyz"), "--output", str(out), *TINY]) == EXIT_OK
    assert (tmp_path / "again.loss.csv").read_bytes() == (workdir / "net.loss.csv").read_bytes()
    assert out.read_bytes() == (workdir / "net.json").read_bytes()


def test_train_from_input_files(workdir, tmp_path):
    out = tmp_path / "in.json"
    args = ["train", "--input", str(workdir / "clean.xyz"), str(workdir / "clean.xyz"), "--output", str(out),
            "--seed", "7", *TINY]
    assert main(args) == EXIT_OK and out.exists()


def test_lambda_default():
    args = build_parser().parse_args(["train", "--output", "x.json"])
    assert args.lambda_ == 0.1
    assert build_parser().parse_args(["upsample", "--checkpoint", "c", "--input", "i", "--output", "o"]).rate == 4


def test_config_file_and_flag_precedence(workdir, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# tiny run\niters = 7\nbatch=16\nlayers=1\nwidth=8\nk=5\nno-figures = true\n")
    out = tmp_path / "c.json"
    base = ["train", "--clean", str(workdir / "clean.xyz"), "--output", str(out), "--config", str(cfg)]
    assert main(base) == EXIT_OK
    assert len((tmp_path / "c.loss.csv").read_text().splitlines()) == 8
    assert main(base + ["--iters", "3"]) == EXIT_OK
    assert len((tmp_path / "c.loss.csv").read_text().splitlines()) == 4
    cfg.write_text("bogus = 1\n")
    assert main(base) == EXIT_USAGE


def test_denoise_and_upsample_counts(workdir, tmp_path):
    noisy = workdir / "clean.xyz"
    ck = str(workdir / "net.json")
    assert main(["denoise", "--checkpoint", ck, "--input", str(noisy), "--output", str(tmp_path / "d.xyz")]) == 0
    assert len(read_cloud(tmp_path / "d.xyz")) == 300
    assert main(["upsample", "--checkpoint", ck, "--input", str(noisy), "--output", str(tmp_path / "u.ply")]) == 0
    assert len(read_cloud(tmp_path / "u.ply")) == 1200
    assert main(["upsample", "--checkpoint", ck, "--input", str(noisy), "--output", str(tmp_path / "u2.xyz"),
                 "--rate", "2"]) == 0
    assert len(read_cloud(tmp_path / "u2.xyz")) == 600


def test_missing_checkpoint_and_unknown_flag(tmp_path, capsys):
    assert main(["denoise", "--checkpoint", str(tmp_path / "none.json"), "--input", "a.xyz",
                 "--output", "b.xyz"]) == EXIT_USAGE
    assert "checkpoint" in capsys.readouterr().err
    assert main(["reconstruct", "--frobnicate"]) == EXIT_USAGE
    assert main(["train", "--clean", str(tmp_path / "missing.xyz"), "--output", str(tmp_path / "x.json")]) == EXIT_USAGE


def test_help_lists_flags(capsys):
    assert main(["train", "--help"]) == 0
    text = capsys.readouterr().out
    for flag in ("--input", "--clean", "--iters", "--batch", "--lambda", "--seed", "--lr", "--config", "--threads"):
        assert flag in text


def test_numerical_failure_exit_code(workdir, tmp_path, monkeypatch):
    import n2nsdf.cli as cli

    def boom(*a, **k):
        raise NumericalFailure("forced")

    monkeypatch.setattr(cli, "train", boom)
    assert main(["train", "--clean", str(workdir / "clean.xyz"), "--output", str(tmp_path / "x.json"),
                 *TINY]) == EXIT_NUMERIC


def sphere_checkpoint(path, radius):
    net = init_network(1, 8, seed=0)
    params = net.parameters()
    # output weights zero: the net is a constant, which is what we want for the empty case
    params[-2] = np.zeros_like(params[-2])
    params[-1] = np.full_like(params[-1], radius)
    save_network(net.with_parameters(params), path)


def test_reconstruct_constant_field_is_empty(tmp_path):
    sphere_checkpoint(tmp_path / "const.json", 0.5)
    out = tmp_path / "empty.obj"
    assert main(["reconstruct", "--checkpoint", str(tmp_path / "const.json"), "--output", str(out),
                 "--res", "2"]) == EXIT_OK
    assert out.exists()


def test_reconstruct_level_offsets(workdir, tmp_path):
    ck = str(workdir / "net.json")
    a, b = tmp_path / "a.obj", tmp_path / "b.ply"
    assert main(["reconstruct", "--checkpoint", ck, "--output", str(a), "--res", "24"]) == 0
    assert main(["reconstruct", "--checkpoint", ck, "--output", str(b), "--res", "24", "--level", "0.1",
                 "--grid", str(tmp_path / "g.npz")]) == 0
    ra = np.linalg.norm(read_mesh(a).vertices - 1.0, axis=1).mean()
    rb = np.linalg.norm(read_mesh(b).vertices - 1.0, axis=1).mean()
    # positive level moves outward; vertices are back in the input frame (scale 3, centre 1)
    assert rb > ra


def test_evaluate_self_and_bad_format(workdir, tmp_path, capsys):
    gt = str(workdir / "clean.xyz")
    report = tmp_path / "r.txt"
    assert main(["evaluate", "--recon", gt, "--gt", gt, "--output", str(report)]) == 0
    r = load_report(report)
    assert r.l2cd == 0.0 and r.f_score == 1.0
    assert (tmp_path / "r.csv").exists() and (tmp_path / "r.png").exists()
    assert "L2CD" in capsys.readouterr().out
    (tmp_path / "x.stl").write_text("solid\n")
    assert main(["evaluate", "--recon", str(tmp_path / "x.stl"), "--gt", gt, "--output", str(report)]) == 2


def test_theorem1_default_run(tmp_path):
    out = tmp_path / "t1.csv"
    start = time.perf_counter()
    assert main(["theorem1", "--output", str(out)]) == 0
    assert time.perf_counter() - start < 60
    rows = read_study_csv(out)
    assert out.read_text().splitlines()[0] == ",".join(STUDY_COLUMNS)
    zero = [r for r in rows if r.sigma == 0.0]
    assert len(zero) == 6 and all(r.residual < 1e-10 for r in zero)
    assert (tmp_path / "t1.png").exists()
