"""Matplotlib renderings written next to the CSV/JSON outputs."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import TABLE_COLUMNS, MetricReport


def save_loss_curve(trace: list[float], path, accuracy: list[float] | None = None) -> None:
    """Per-epoch mean loss, with an optional held-out accuracy axis."""
    fig, ax = plt.subplots(figsize=(6, 4))
    epochs = range(1, len(trace) + 1)
    ax.plot(epochs, trace, "o-", color="black", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("mean loss")
    if accuracy:
        ax2 = ax.twinx()
        ax2.plot(range(1, len(accuracy) + 1), accuracy, "s--", color="tab:green", label="heldout accuracy")
        ax2.set_ylabel("accuracy")
        ax2.set_ylim(0.0, 1.05)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_metric_bars(report: MetricReport, path, label: str = "corpus") -> None:
    """Bar chart over the seven metric columns."""
    fig, ax = plt.subplots(figsize=(7, 4))
    values = report.values()
    ax.bar(range(len(values)), values, color="tab:blue")
    ax.set_xticks(range(len(values)))
    ax.set_xticklabels(TABLE_COLUMNS, rotation=30, ha="right")
    ax.set_ylabel("score")
    ax.set_title(f"question metrics: {label} ({report.items} items)")
    for x, v in enumerate(values):
        ax.text(x, v, f"{v:.3f}", ha="center", va="bottom", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def save_feelings_histogram(feelings: dict[str, int], path, title: str = "rater feelings") -> None:
    fig, ax = plt.subplots(figsize=(6, 4))
    names = list(feelings)
    ax.bar(range(len(names)), [feelings[n] for n in names], color="tab:orange")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=20, ha="right")
    ax.set_ylabel("ratings")
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
