"""Report figures.  Each function renders one PNG next to the CSV it
illustrates; metadata is stripped so the bytes only depend on the data."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure

_STYLE = {"font.size": 9}


def _figure(width=5.0, height=3.5) -> Figure:
    fig = Figure(figsize=(width, height), dpi=100)
    FigureCanvasAgg(fig)
    return fig


def _save(fig: Figure, path) -> Path:
    path = Path(path)
    fig.tight_layout()
    fig.savefig(path, format="png", metadata={"Software": None})
    return path


def plot_confusion(report, path) -> Path:
    cm = np.asarray(report.confusion)
    n = len(report.labels)
    fig = _figure(2.0 + 0.6 * n, 1.6 + 0.6 * n)
    ax = fig.add_subplot()
    im = ax.imshow(cm, cmap="Blues")
    ax.set_xticks(range(n), report.labels, rotation=45, ha="right")
    ax.set_yticks(range(n), report.labels)
    ax.set_xlabel("predicted")
    ax.set_ylabel("true")
    thresh = cm.max() / 2 if cm.size else 0
    for i in range(n):
        for j in range(n):
            ax.text(j, i, str(int(cm[i, j])), ha="center", va="center",
                    color="white" if cm[i, j] > thresh else "black", fontsize=8)
    fig.colorbar(im, ax=ax, shrink=0.8)
    ax.set_title(f"macro-F1 {report.macro_f1:.3f}")
    return _save(fig, path)


def plot_history(history: Sequence[dict], path) -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    epochs = [r["epoch"] for r in history]
    ax.plot(epochs, [r["train_loss"] for r in history], "o-", color="C0", label="train loss")
    ax.set_xlabel("epoch")
    ax.set_ylabel("loss")
    f1_keys = sorted({k for r in history for k in r if k.endswith("_f1")})
    if f1_keys:
        ax2 = ax.twinx()
        for i, k in enumerate(f1_keys):
            ax2.plot(epochs, [r.get(k, np.nan) for r in history], "s--", color=f"C{i + 1}", label=k)
        ax2.set_ylabel("macro-F1")
        ax2.set_ylim(0, 1.02)
        ax2.legend(loc="center right", frameon=False)
    ax.legend(loc="upper right", frameon=False)
    return _save(fig, path)


def plot_elbow(inertias: Sequence[float], chosen_k: int, path) -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    ks = np.arange(1, len(inertias) + 1)
    ax.plot(ks, inertias, "o-", color="k")
    ax.axvline(chosen_k, color="C3", ls=":", label=f"k = {chosen_k}")
    ax.set_xlabel("k")
    ax.set_ylabel("inertia")
    ax.legend(frameon=False)
    return _save(fig, path)


def plot_correlations(entries: Sequence[tuple[str, float]], path, top_n: int = 15) -> Path:
    entries = list(entries)[:top_n]
    fig = _figure(5.0, 1.0 + 0.25 * max(len(entries), 1))
    ax = fig.add_subplot()
    names = [e[0] for e in entries][::-1]
    vals = [e[1] for e in entries][::-1]
    ax.barh(range(len(vals)), vals, color=["C3" if v < 0 else "C0" for v in vals])
    ax.set_yticks(range(len(names)), names)
    ax.axvline(0, color="k", lw=0.5)
    ax.set_xlim(-1, 1)
    ax.set_xlabel("point-biserial r")
    return _save(fig, path)


def plot_reason_counts(counts: Sequence[tuple[str, int]], path) -> Path:
    fig = _figure()
    ax = fig.add_subplot()
    names = [c[0] for c in counts]
    ax.bar(range(len(counts)), [c[1] for c in counts], color="C0")
    ax.set_xticks(range(len(names)), names, rotation=45, ha="right")
    ax.set_ylabel("statements")
    return _save(fig, path)
