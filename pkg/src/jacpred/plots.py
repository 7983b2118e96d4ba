"""Figure rendering for the CLI report paths.

Every reporting subcommand drops a PNG next to its delimited output: the
loss audit renders the similarity-vs-scale behavior, training renders its
loss/accuracy curves, and sweeps render a grouped bar chart.
"""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .losses import cosine_similarity, jvs

DPI = 120


def similarity_response_figure(path, dim=16, seed=0):
    """JVS versus cosine similarity for scaled pairs (z, k z)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(dim)
    ks = np.linspace(-6.0, 6.0, 481)
    jvs_vals = [jvs(z, k * z) for k in ks]
    cos_vals = [cosine_similarity(z, k * z) for k in ks]
    fig, axes = plt.subplots(1, 2, figsize=(8.0, 3.2), sharey=True)
    for ax, vals, title in zip(axes, (jvs_vals, cos_vals),
                               ("Jaccard vector similarity", "Cosine similarity")):
        ax.plot(ks, vals, lw=1.6)
        ax.axhline(0.0, color="0.8", lw=0.8)
        ax.set_xlabel("scale factor k")
        ax.set_title(title, fontsize=10)
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("similarity of (z, kz)")
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def training_curves_figure(history, path, top_k=5):
    """Per-epoch train loss and evaluation accuracy."""
    epochs = [row.epoch for row in history]
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(8.0, 3.2))
    ax1.plot(epochs, [row.train_loss for row in history], lw=1.6)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("train loss")
    ax1.grid(alpha=0.3)
    ax2.plot(epochs, [row.eval_top1 for row in history], lw=1.6, label="top-1")
    ax2.plot(epochs, [row.eval_topk for row in history], lw=1.6,
             label=f"top-{top_k}")
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("test accuracy")
    ax2.set_ylim(0.0, 1.0)
    ax2.legend(fontsize=8)
    ax2.grid(alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)


def sweep_figure(rows, path, metric="top1"):
    """Mean +- std bar chart of a sweep, grouped by loss family.

    ``rows`` are dicts with keys kind, family, {metric}_mean, {metric}_std.
    """
    labels = [r["kind"] for r in rows]
    means = [r[f"{metric}_mean"] for r in rows]
    stds = [r[f"{metric}_std"] for r in rows]
    families = [r["family"] for r in rows]
    palette = {}
    colors = []
    cycle = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for fam in families:
        if fam not in palette:
            palette[fam] = cycle[len(palette) % len(cycle)]
        colors.append(palette[fam])
    x = np.arange(len(rows))
    fig, ax = plt.subplots(figsize=(max(5.0, 0.9 * len(rows) + 2.0), 3.6))
    ax.bar(x, means, yerr=stds, capsize=3, color=colors)
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=30, ha="right", fontsize=8)
    ax.set_ylabel(f"{metric} (mean over seeds)")
    ax.grid(axis="y", alpha=0.3)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in palette.values()]
    ax.legend(handles, palette.keys(), fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=DPI)
    plt.close(fig)
