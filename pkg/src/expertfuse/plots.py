"""Figure rendering for report outputs.

Figures are conveniences rendered next to the delimited data files; the
TSV/JSON files remain the authoritative plot-ready outputs.
"""

from __future__ import annotations

from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)


def render_comparison(rows: Sequence[dict], path) -> None:
    """Bar chart of final accuracy per strategy row."""
    labels = [row["strategy"] for row in rows]
    values = [row["final_accuracy"] for row in rows]
    fig, ax = plt.subplots(figsize=(max(4.0, 0.9 * len(rows) + 1.5), 3.2))
    ax.bar(range(len(rows)), values, color="#4878a8")
    ax.set_xticks(range(len(rows)))
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel("final accuracy")
    ax.set_ylim(0.0, 1.0)
    ax.grid(axis="y", alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def render_frontier(rows: Sequence[dict], path) -> None:
    """Accuracy versus mean experts queried, one point per trade-off weight."""
    fig, ax = plt.subplots(figsize=(4.8, 3.4))
    xs = [row["mean_queried"] for row in rows]
    ys = [row["accuracy"] for row in rows]
    ax.plot(xs, ys, marker="o", color="#a85448")
    for row in rows:
        ax.annotate(
            f'{row["lambda"]:g}',
            (row["mean_queried"], row["accuracy"]),
            textcoords="offset points",
            xytext=(4, 4),
            fontsize=7,
        )
    ax.set_xlabel("mean experts queried")
    ax.set_ylabel("final accuracy")
    ax.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
