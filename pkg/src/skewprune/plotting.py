"""Figures written next to the text reports (PNG, headless backend)."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.ticker import MaxNLocator  # noqa: E402

plt.rcParams.update({
    "figure.dpi": 110,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "font.size": 9,
})


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_skew(stage_records: list[dict], path) -> Path:
    """One row per block: head skewness (left) and channel-group skewness (right).

    Bars at or below zero are the pruned units.
    """
    blocks = [b for rec in stage_records for b in rec["blocks"]]
    n = max(len(blocks), 1)
    fig, axes = plt.subplots(n, 2, figsize=(8, 1.8 * n), squeeze=False)
    for row, blk in zip(axes, blocks):
        sk = blk["skew"]
        for ax, key, title in ((row[0], "head_skews", "heads"), (row[1], "group_skews", "groups")):
            vals = [s for _, s in sk[key]]
            colors = ["tab:red" if v <= 0 else "tab:blue" for v in vals]
            ax.bar(range(len(vals)), vals, color=colors, width=0.8)
            ax.axhline(0.0, color="k", lw=0.8)
            ax.xaxis.set_major_locator(MaxNLocator(integer=True))
            ax.set_title(f"stage {sk['stage']} block {sk['block']} {title}", fontsize=8)
            ax.set_ylabel("skewness")
    return _save(fig, path)


def plot_rounds(rounds: list[dict], path, baseline: list[dict] | None = None) -> Path:
    """Server test accuracy / F1 and per-round download bytes across FL rounds."""
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    r = [x["round"] for x in rounds]
    ax1.plot(r, [x["test_accuracy"] for x in rounds], marker="o", label="accuracy")
    ax1.plot(r, [x["test_f1"] for x in rounds], marker="s", label="F1")
    if baseline:
        ax1.plot([x["round"] for x in baseline], [x["test_accuracy"] for x in baseline], ls="--",
                 color="gray", label="accuracy (no pruning)")
    for x in rounds:
        if x.get("pruned_stages"):
            ax1.axvline(x["round"], color="tab:red", alpha=0.4, lw=1)
    ax1.set_xlabel("round")
    ax1.set_ylim(0, 1)
    ax1.legend(fontsize=7)
    ax2.step(r, [x["bytes_down"] / 2 ** 20 for x in rounds], where="post")
    ax2.set_xlabel("round")
    ax2.set_ylabel("bytes down (MB)")
    return _save(fig, path)


def plot_effects(table: dict, path) -> Path:
    """Remaining fraction (after / before) per metric."""
    rows = [(v["label"], v["ratio"]) for v in table.values() if v["ratio"] is not None]
    fig, ax = plt.subplots(figsize=(6, 0.45 * len(rows) + 1))
    ax.barh([lab for lab, _ in rows], [100 * r for _, r in rows], color="tab:green")
    ax.axvline(100, color="k", lw=0.8)
    ax.set_xlabel("after / before (%)")
    ax.invert_yaxis()
    return _save(fig, path)
