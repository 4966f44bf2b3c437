"""Headless matplotlib figures rendered next to each report's delimited output."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402

LOSS_KEYS = ("l_fine", "l_coarse", "l_cujp", "l_recon", "l_commit", "total")

CLASS_COLORS = {"unified": "purple", "shared": "orange", "single": "c", "dead": "0.7"}


def _save(fig, path):
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def training_curves(records: list, path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.5))
    epochs = [r["epoch"] for r in records]
    for key in LOSS_KEYS:
        ax1.plot(epochs, [r[key] for r in records], label=key, marker="o", ms=3)
    ax1.set_xlabel("epoch")
    ax1.set_ylabel("loss")
    ax1.legend(fontsize=7)
    ax2.plot(epochs, [r["perplexity"] for r in records], color="k", marker="o", ms=3)
    ax2.set_xlabel("epoch")
    ax2.set_ylabel("codebook perplexity")
    _save(fig, path)


def threshold_sweep(rows: list, theta: float, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    thetas = [r["theta"] for r in rows]
    for key, color in (("os_star", "tab:blue"), ("unk", "tab:red"), ("hos", "tab:green")):
        ax.plot(thetas, [r[key] for r in rows], label=key, color=color)
    ax.axvline(theta, color="0.5", ls="--", lw=1, label="calibrated")
    ax.set_xlabel("rejection threshold")
    ax.set_ylabel("percent")
    ax.legend(fontsize=8)
    _save(fig, path)


def per_class_accuracy(per_class: dict, path) -> None:
    fig, ax = plt.subplots(figsize=(5, 3))
    names = sorted(per_class, key=int)
    ax.bar(range(len(names)), [per_class[k] for k in names], color="tab:blue")
    ax.set_xticks(range(len(names)), names)
    ax.set_xlabel("known class")
    ax.set_ylabel("accuracy (%)")
    _save(fig, path)


def codebook_usage(rows: list, counts_by_modality: dict, path) -> None:
    """Per-codeword total usage colored by how many modalities share it."""
    fig, ax = plt.subplots(figsize=(7, 3.5))
    total = sum(counts_by_modality.values())
    colors = [CLASS_COLORS[row["class"]] for row in rows]
    ax.bar(range(len(rows)), total, color=colors, width=1.0)
    handles = [plt.Rectangle((0, 0), 1, 1, color=c) for c in CLASS_COLORS.values()]
    ax.legend(handles, CLASS_COLORS.keys(), fontsize=7)
    ax.set_xlabel("codeword")
    ax.set_ylabel("assignments")
    _save(fig, path)


def ablation_bars(cells: dict, path) -> None:
    """Mean HOS per sweep cell with per-seed scatter."""
    fig, ax = plt.subplots(figsize=(max(5, 0.8 * len(cells)), 3.5))
    names = list(cells)
    means = [sum(v) / len(v) if v else 0.0 for v in cells.values()]
    ax.bar(range(len(names)), means, color="tab:blue", alpha=0.8)
    for i, vals in enumerate(cells.values()):
        ax.plot([i] * len(vals), vals, "k.", ms=4)
    ax.set_xticks(range(len(names)), names, rotation=30, ha="right", fontsize=7)
    ax.set_ylabel("HOS (%)")
    _save(fig, path)
