"""Figures written next to the tabular run outputs."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def read_log(path) -> tuple[np.ndarray, np.ndarray, list[tuple[int, float]]]:
    """Parse a ``step\\tloss\\tval_mrr`` training log."""
    steps, losses, vals = [], [], []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            parts = line.rstrip("\n").split("\t")
            if len(parts) < 2 or not parts[0].isdigit():
                continue
            steps.append(int(parts[0]))
            losses.append(float(parts[1]))
            if len(parts) > 2 and parts[2]:
                vals.append((int(parts[0]), float(parts[2])))
    return np.asarray(steps), np.asarray(losses), vals


def plot_training(log_path, out_path, window: int = 25) -> None:
    steps, losses, vals = read_log(log_path)
    fig, ax = plt.subplots(figsize=(6, 3.5))
    if len(losses):
        ax.plot(steps, losses, color="0.75", lw=0.8, label="loss")
        if len(losses) >= window:
            smooth = np.convolve(losses, np.ones(window) / window, mode="valid")
            ax.plot(steps[window - 1 :], smooth, color="C0", label=f"loss ({window}-step mean)")
    ax.set_xlabel("step")
    ax.set_ylabel("loss")
    ax.set_yscale("log")
    if vals:
        ax2 = ax.twinx()
        ax2.plot(*zip(*vals), "o-", color="C1", ms=3, label="validation MRR")
        ax2.set_ylabel("validation MRR")
        ax2.set_ylim(0, 1)
    ax.legend(loc="upper right", fontsize=8)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def plot_bars(labels, values, out_path, ylabel: str = "test MRR", title: str | None = None) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.bar(range(len(values)), values, color=[f"C{i}" for i in range(len(values))])
    ax.set_xticks(range(len(values)), labels)
    ax.set_ylabel(ylabel)
    ax.set_ylim(0, 1)
    for i, v in enumerate(values):
        ax.text(i, v + 0.01, f"{v:.3f}", ha="center", fontsize=8)
    if title:
        ax.set_title(title)
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)
