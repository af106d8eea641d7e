"""Matplotlib figure rendering for training logs, metric reports, and ablations."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt


def plot_training_curves(records: list[dict], path: str | Path) -> None:
    """Loss components and validation J against epoch."""
    if not records:
        return
    epochs = [r["epoch"] for r in records]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4))
    for key in ("seg", "sasa", "kl", "orth", "total"):
        ax1.plot(epochs, [r[key] for r in records], marker="o", label=key)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.set_yscale("log")
    ax1.legend(fontsize=8)
    ax1.set_title("training losses")
    ax2.plot(epochs, [r["val_J"] for r in records], marker="o", color="tab:green")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("val J (%)")
    ax2.set_ylim(0, 100)
    ax2.set_title("validation region overlap")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_metric_report(reports: dict, path: str | Path) -> None:
    """Grouped bars of J/F/JF per split, with S on a twin axis."""
    splits = sorted(reports)
    xs = range(len(splits))
    width = 0.25
    fig, ax = plt.subplots(figsize=(1.8 * max(len(splits), 2) + 2, 4))
    for i, key in enumerate(("J", "F", "JF")):
        ax.bar(
            [x + (i - 1) * width for x in xs],
            [getattr(reports[s], key) for s in splits],
            width=width,
            label=key,
        )
    ax.set_xticks(list(xs))
    ax.set_xticklabels(splits)
    ax.set_ylabel("percent")
    ax.set_ylim(0, 100)
    ax.legend(fontsize=8, loc="upper left")
    ax2 = ax.twinx()
    ax2.plot(list(xs), [reports[s].S for s in splits], "k^--", label="S")
    ax2.set_ylabel("S")
    ax2.legend(fontsize=8, loc="upper right")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_ablation(table: dict, path: str | Path) -> None:
    """Bar chart of the sweep's headline metric, mean with spread over seeds."""
    variants = [row["name"] for row in table["rows"]]
    means = [row["J_mean"] for row in table["rows"]]
    spreads = [row["J_std"] for row in table["rows"]]
    fig, ax = plt.subplots(figsize=(1.2 * max(len(variants), 2) + 2, 4))
    ax.bar(variants, means, yerr=spreads, capsize=4, color="tab:blue")
    ax.set_ylabel("J (%)")
    ax.set_title(f"ablation on {table['eval']['split']} ({table['eval'].get('template') or 'all'})")
    ax.set_ylim(0, 100)
    for tick in ax.get_xticklabels():
        tick.set_rotation(20)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
