"""Figures written next to the CSV outputs (file-only Agg backend)."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402


def plot_loss_history(history, path) -> None:
    """Objective and training accuracy per outer iteration."""
    it = [h.iteration for h in history]
    fig, ax = plt.subplots(figsize=(6, 3.5))
    ax.plot(it, [h.objective for h in history], "o-", label="objective")
    ax.plot(it, [h.hinge for h in history], "s--", label="hinge")
    ax.set_yscale("log")
    ax.set_xlabel("outer iteration")
    ax.set_ylabel("loss")
    acc = ax.twinx()
    acc.plot(it, [h.train_accuracy for h in history], "k:", label="train accuracy")
    acc.set_ylim(0, 1.05)
    acc.set_ylabel("train accuracy")
    lines = ax.get_legend_handles_labels()
    more = acc.get_legend_handles_labels()
    ax.legend(lines[0] + more[0], lines[1] + more[1], loc="center right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_confusion(confusion, path, class_names=None) -> None:
    """Row-normalised confusion matrix with counts in the cells."""
    conf = np.asarray(confusion, dtype=float)
    rows = conf.sum(axis=1, keepdims=True)
    norm = np.divide(conf, rows, out=np.zeros_like(conf), where=rows > 0)
    n = len(conf)
    names = class_names or [str(i) for i in range(n)]
    fig, ax = plt.subplots(figsize=(1.2 * n + 2, 1.2 * n + 1.5))
    im = ax.imshow(norm, vmin=0, vmax=1, cmap="Blues")
    for i in range(n):
        for j in range(n):
            ax.text(j, i, f"{int(conf[i, j])}", ha="center", va="center",
                    color="white" if norm[i, j] > 0.5 else "black")
    ax.set_xticks(range(n), names)
    ax.set_yticks(range(n), names)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
