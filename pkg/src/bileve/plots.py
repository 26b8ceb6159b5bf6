"""Figures written next to the delimited reports."""
from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

FIGSIZE = (6.4, 3.6)


def _finish(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def cost_histogram(result: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    bins = np.linspace(min(result["watermarked"] + result["null"]), max(result["watermarked"] + result["null"]), 30)
    ax.hist(result["null"], bins=bins, alpha=0.6, label="human / unwatermarked")
    ax.hist(result["watermarked"], bins=bins, alpha=0.6, label="watermarked")
    ax.set_xlabel("best-shift alignment cost")
    ax.set_ylabel("samples")
    ax.legend(frameon=False)
    return _finish(fig, path)


def segment_panel(result: dict, path) -> Path:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.6))
    S = len(result["pvalues_after"])
    x = np.arange(1, S + 1)
    ax1.bar(x - 0.2, result["pvalues_before"], 0.4, label="before")
    ax1.bar(x + 0.2, result["pvalues_after"], 0.4, label="after")
    ax1.set_xlabel("segment")
    ax1.set_ylabel("p-value")
    ax1.set_xticks(x)
    ax1.legend(frameon=False)
    k = result["attacked_segment"]
    ranks = np.arange(1, len(result["best10_after"][k]) + 1)
    ax2.plot(ranks, result["best10_before"][k], "o-", label="before")
    ax2.plot(ranks, result["best10_after"][k], "s-", label="after")
    ax2.set_xlabel(f"best shifts, segment {k + 1}")
    ax2.set_ylabel("alignment cost")
    ax2.legend(frameon=False)
    return _finish(fig, path)


def metrics_bars(reports: dict, path) -> Path:
    """``reports`` maps a label to a ``(TPR, FPR)`` pair."""
    fig, ax = plt.subplots(figsize=FIGSIZE)
    labels = list(reports)
    x = np.arange(len(labels))
    ax.bar(x - 0.2, [reports[k][0] for k in labels], 0.4, label="TPR")
    ax.bar(x + 0.2, [reports[k][1] for k in labels], 0.4, label="FPR")
    ax.set_xticks(x)
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylim(0, 1.05)
    ax.legend(frameon=False)
    return _finish(fig, path)


def pvalue_histogram(pvalues, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    ax.hist(pvalues, bins=np.linspace(0, 1, 21))
    ax.set_xlabel("p-value")
    ax.set_ylabel("samples")
    return _finish(fig, path)


def perplexity_boxes(ppl: dict, path) -> Path:
    fig, ax = plt.subplots(figsize=FIGSIZE)
    labels = list(ppl)
    ax.boxplot([ppl[k] for k in labels], labels=labels, showfliers=False)
    ax.set_yscale("log")
    ax.set_ylabel("perplexity (toy model)")
    return _finish(fig, path)
