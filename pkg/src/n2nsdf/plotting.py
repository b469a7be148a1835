"""Matplotlib figures written next to the CSV outputs (Agg backend, no display)."""

from __future__ import annotations

from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def _smooth(y: np.ndarray, window: int) -> np.ndarray:
    if window <= 1 or len(y) < window:
        return y
    kernel = np.ones(window) / window
    return np.convolve(y, kernel, mode="valid")


def plot_loss_curve(history, path, window: int = 100) -> None:
    """Fit, consistency and total loss against iteration; ``history`` holds LossBreakdowns."""
    fit = np.array([h.emd_term for h in history])
    gc = np.array([h.gc_term for h in history])
    total = np.array([h.total for h in history])
    fig, axes = plt.subplots(1, 2, figsize=(10, 4))
    for y, label in ((total, "total"), (fit, "fit")):
        s = _smooth(y, window)
        axes[0].plot(np.arange(len(s)) + (len(y) - len(s)), s, label=label)
    axes[0].set_xlabel("iteration")
    axes[0].set_ylabel("loss")
    axes[0].legend()
    s = _smooth(gc, window)
    axes[1].plot(np.arange(len(s)) + (len(gc) - len(s)), s, color="tab:green")
    axes[1].set_xlabel("iteration")
    axes[1].set_ylabel("consistency term")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_study(rows, path) -> None:
    """Residual against observation count, one line per (metric, sigma), averaged over seeds."""
    groups = defaultdict(lambda: defaultdict(list))
    for r in rows:
        groups[(r.metric, r.sigma)][r.n_obs].append(r.residual)
    fig, ax = plt.subplots(figsize=(6, 4))
    for (metric, sigma), by_n in sorted(groups.items()):
        ns = sorted(by_n)
        ax.plot(ns, [np.mean(by_n[n]) for n in ns], marker="o", label=f"{metric} sigma={sigma:g}")
    ax.set_xlabel("observations")
    ax.set_ylabel("residual L2CD")
    if any(r.residual > 0 for r in rows):
        ax.set_yscale("symlog", linthresh=1e-8)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_clouds(clouds, labels, path, max_points: int = 5000) -> None:
    """Scatter a few point clouds side by side (thinned to ``max_points`` each)."""
    fig = plt.figure(figsize=(4 * len(clouds), 4))
    for k, (cloud, label) in enumerate(zip(clouds, labels)):
        pts = cloud.points[:: max(1, len(cloud) // max_points)]
        ax = fig.add_subplot(1, len(clouds), k + 1, projection="3d")
        ax.scatter(pts[:, 0], pts[:, 1], pts[:, 2], s=1)
        ax.set_title(label)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def plot_report(report, path) -> None:
    """Bar chart of the displayed metric values of one MetricsReport."""
    names = ["L2CD x1e4", "L1CD x10", "P2M x1e4", "NC", "F-score"]
    values = [report.l2cd * 1e4, report.l1cd * 10, report.p2m * 1e4, report.normal_consistency, report.f_score]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.bar(names, [0.0 if np.isnan(v) else v for v in values])
    ax.set_title(f"n_recon={report.n_recon} n_gt={report.n_gt}")
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)
