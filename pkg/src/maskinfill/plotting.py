"""Figures written next to the report files."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

# PNG metadata without a version string keeps files byte-stable across matplotlib builds
_META = {"Software": None}


def _finish(fig, path):
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata=_META)
    plt.close(fig)


def plot_tradeoff(rows: Sequence, path: str | Path, title: str = "BLEU against accuracy as eta grows") -> None:
    """BLEU over accuracy, one point per eta, joined in sweep order."""
    fig, ax = plt.subplots(figsize=(4.5, 3.4))
    acc = [100 * r.accuracy for r in rows]
    bl = [100 * r.bleu for r in rows]
    ax.plot(acc, bl, "o-", color="tab:blue", lw=1.2, ms=5)
    for r, x, y in zip(rows, acc, bl):
        ax.annotate(f"$\\eta$={r.eta:g}", (x, y), textcoords="offset points", xytext=(4, 4), fontsize=7)
    ax.set_xlabel("accuracy (%)")
    ax.set_ylabel("self-BLEU")
    ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    _finish(fig, path)


def plot_reports(reports: Sequence, path: str | Path) -> None:
    """Side-by-side accuracy and BLEU bars for each evaluated model."""
    fig, axes = plt.subplots(1, 2, figsize=(5.5, 3.0))
    names = [r.model for r in reports]
    for ax, key, label in zip(axes, ("accuracy", "bleu"), ("accuracy (%)", "self-BLEU")):
        vals = [100 * getattr(r, key) for r in reports]
        ax.bar(names, vals, color=["0.6", "tab:blue", "tab:orange"][:len(names)])
        for i, v in enumerate(vals):
            ax.text(i, v, f"{v:.1f}", ha="center", va="bottom", fontsize=7)
        ax.set_ylabel(label)
        ax.set_ylim(0, 105)
        ax.tick_params(axis="x", labelsize=7)
    _finish(fig, path)
