"""Matplotlib figures rendered next to the delimited outputs."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def save_loss_curve(trace, path) -> Path:
    path = Path(path)
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(np.arange(len(trace)), trace, lw=1.2)
    ax.set_xlabel("step")
    ax.set_ylabel("velocity-matching loss")
    if np.all(np.asarray(trace) > 0):
        ax.set_yscale("log")
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def save_sample_scatter(base, generated, target_mean, path) -> Path:
    path = Path(path)
    base = np.asarray(base)
    generated = np.asarray(generated)
    fig, ax = plt.subplots(figsize=(5, 5))
    ax.scatter(base[:, 0], base[:, 1], s=4, alpha=0.3, label="noise (t=0)")
    ax.scatter(generated[:, 0], generated[:, 1], s=4, alpha=0.3, label="transported (t=1)")
    ax.scatter([target_mean[0]], [target_mean[1]], marker="x", s=80, c="k",
               label="target mean")
    ax.set_aspect("equal")
    ax.legend(loc="best", fontsize=8)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
