"""Metrics, feature correlation, reason clustering and report tables."""

from __future__ import annotations

import csv
import html
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .numerics import make_rng

log = logging.getLogger(__name__)


class UndefinedCorrelationError(ValueError):
    pass


# --------------------------------------------------------------------------
# classification metrics


@dataclass
class EvaluationReport:
    labels: list[str]
    confusion: np.ndarray  # rows = true class, columns = predicted class
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    zero_division: list[str] = field(default_factory=list)

    @property
    def n_instances(self) -> int:
        return int(self.confusion.sum())

    @property
    def macro_precision(self) -> float:
        return float(self.precision.mean())

    @property
    def macro_recall(self) -> float:
        return float(self.recall.mean())

    @property
    def macro_f1(self) -> float:
        return float(self.f1.mean())

    @property
    def accuracy(self) -> float:
        return float(np.trace(self.confusion) / max(self.confusion.sum(), 1))

    def rows(self) -> list[dict]:
        out = []
        for i, lab in enumerate(self.labels):
            out.append({"class": lab, "precision": self.precision[i], "recall": self.recall[i],
                        "f1": self.f1[i], "support": int(self.confusion[i].sum())})
        out.append({"class": "avg.", "precision": self.macro_precision, "recall": self.macro_recall,
                    "f1": self.macro_f1, "support": self.n_instances})
        return out


def confusion_matrix(y_true: Sequence[int], y_pred: Sequence[int], n_classes: int) -> np.ndarray:
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (np.asarray(y_true, dtype=int), np.asarray(y_pred, dtype=int)), 1)
    return cm


def precision_recall_f1(confusion, labels: Sequence[str] | None = None) -> EvaluationReport:
    """Per-class P/R/F1 from a confusion matrix.  A metric whose denominator
    is zero is reported as 0 and the class is listed in ``zero_division``."""
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError("confusion matrix must be square")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be non-negative")
    labels = list(labels) if labels is not None else [str(i) for i in range(cm.shape[0])]
    tp = np.diag(cm).astype(float)
    pred_tot = cm.sum(axis=0).astype(float)
    true_tot = cm.sum(axis=1).astype(float)
    flagged = []
    with np.errstate(divide="ignore", invalid="ignore"):
        precision = np.where(pred_tot > 0, tp / pred_tot, 0.0)
        recall = np.where(true_tot > 0, tp / true_tot, 0.0)
        denom = precision + recall
        f1 = np.where(denom > 0, 2 * precision * recall / denom, 0.0)
    for i, lab in enumerate(labels):
        if pred_tot[i] == 0 or true_tot[i] == 0:
            flagged.append(lab)
    return EvaluationReport(labels, cm.copy(), precision, recall, f1, flagged)


def write_report_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class", "precision", "recall", "f1", "support"])
        for row in report.rows():
            w.writerow([row["class"], f"{row['precision']:.4f}", f"{row['recall']:.4f}", f"{row['f1']:.4f}", row["support"]])


def write_confusion_csv(report: EvaluationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred"] + report.labels)
        for lab, row in zip(report.labels, report.confusion):
            w.writerow([lab] + [int(v) for v in row])


# --------------------------------------------------------------------------
# point-biserial correlation


def point_biserial(labels, values) -> float:
    """((M1 - M0) / s_n) * sqrt(p q) with the population standard deviation."""
    y = np.asarray(labels)
    x = np.asarray(values, dtype=np.float64)
    if y.shape != x.shape or y.ndim != 1:
        raise ValueError("labels and values must be equal-length vectors")
    if not np.all(np.isfinite(x)):
        raise ValueError("values must be finite")
    ones = y.astype(bool)
    if ones.all() or not ones.any():
        raise UndefinedCorrelationError("labels contain a single class")
    s_n = x.std()
    if s_n == 0 or np.all(x == x[0]):
        raise UndefinedCorrelationError("values are constant")
    p = ones.mean()
    q = 1.0 - p
    m1 = x[ones].mean()
    m0 = x[~ones].mean()
    r = (m1 - m0) / s_n * np.sqrt(p * q)
    return float(np.clip(r, -1.0, 1.0))


@dataclass
class CorrelationReport:
    entries: list[tuple[str, float]]
    omitted: list[str] = field(default_factory=list)

    def top(self, n: int = 5) -> list[tuple[str, float]]:
        return self.entries[:n]


def correlate_features(labels, matrix, names: Sequence[str]) -> CorrelationReport:
    """r_pb of every feature column against binary labels, strongest first.

    Columns where the coefficient is undefined (constant values) are
    omitted and listed in ``omitted``.  Ties in |r| keep column order.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.shape[1] != len(names):
        raise ValueError("one name per feature column required")
    entries, omitted = [], []
    for j, name in enumerate(names):
        try:
            entries.append((name, point_biserial(labels, matrix[:, j])))
        except UndefinedCorrelationError:
            omitted.append(name)
    order = sorted(range(len(entries)), key=lambda i: (-abs(entries[i][1]), i))
    return CorrelationReport([entries[i] for i in order], omitted)


def write_correlations_csv(report: CorrelationReport, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "r_pb"])
        for name, r in report.entries:
            w.writerow([name, f"{r:.6f}"])


# --------------------------------------------------------------------------
# k-means and elbow selection


@dataclass
class ClusterReport:
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertias: dict[int, float]
    clear_elbow: bool = True


def _sq_dists(x, c):
    return ((x[:, None, :] - c[None, :, :]) ** 2).sum(-1)


def _lloyd(x, k: int, first: int, max_iter: int):
    n = len(x)
    chosen = [first]
    nearest = ((x - x[first]) ** 2).sum(-1)
    while len(chosen) < k:
        nxt = int(np.argmax(nearest))
        chosen.append(nxt)
        nearest = np.minimum(nearest, ((x - x[nxt]) ** 2).sum(-1))
    centroids = x[chosen].copy()
    assign = None
    history = []
    for _ in range(max_iter):
        d = _sq_dists(x, centroids)
        new_assign = d.argmin(axis=1)
        history.append(float(d[np.arange(n), new_assign].sum()))
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        for j in range(k):
            members = assign == j
            if members.any():
                centroids[j] = x[members].mean(axis=0)
            else:
                far = int(np.argmax(d[np.arange(n), assign]))
                centroids[j] = x[far]
                assign[far] = j
    d = _sq_dists(x, centroids)
    assign = d.argmin(axis=1)
    return centroids, assign, float(d[np.arange(n), assign].sum()), history


def kmeans(vectors, k: int, seed: int = 0, max_iter: int = 300, return_history: bool = False, n_init: int = 20):
    """Lloyd's algorithm from seeded farthest-point initializations.

    Each run starts from a seeded random point and adds, one at a time, the
    point farthest from its nearest chosen centroid (lowest index on ties).
    ``n_init`` runs start from distinct seeded points; the lowest final
    inertia wins, earliest run on ties.  A cluster that empties is
    re-seeded with the point farthest from its current centroid.  Returns
    (centroids, assignments, inertia).
    """
    x = np.asarray(vectors, dtype=np.float64)
    n = len(x)
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > n:
        raise ValueError(f"k={k} exceeds the number of points ({n})")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    starts = make_rng(seed).permutation(n)[: min(n_init, n)]
    best = None
    for first in starts:
        run = _lloyd(x, k, int(first), max_iter)
        if best is None or run[2] < best[2]:
            best = run
    centroids, assign, inertia, history = best
    if return_history:
        return centroids, assign, inertia, history
    return centroids, assign, inertia


def elbow_select(inertias: Sequence[float]) -> tuple[int, bool]:
    """k* for inertias measured at k = 1..K: the k with the largest second
    difference ``I[k-1] - 2 I[k] + I[k+1]``, smaller k on ties.  The flag is
    False when no k has a positive second difference (no clear elbow)."""
    vals = np.asarray(inertias, dtype=np.float64)
    if len(vals) < 3:
        raise ValueError("elbow selection needs inertias for at least k = 1..3")
    second = vals[:-2] - 2 * vals[1:-1] + vals[2:]
    scale = max(abs(vals[0]), 1e-300)
    best = int(np.argmax(second))
    clear = bool(second[best] > 1e-9 * scale)
    return best + 2, clear


def cluster_sweep(vectors, max_k: int = 10, seed: int = 0, max_iter: int = 300) -> ClusterReport:
    x = np.asarray(vectors, dtype=np.float64)
    max_k = min(max_k, len(x))
    inertias = {}
    fits = {}
    for k in range(1, max_k + 1):
        fits[k] = kmeans(x, k, seed, max_iter)
        inertias[k] = fits[k][2]
    k_star, clear = elbow_select([inertias[k] for k in range(1, max_k + 1)])
    if not clear:
        log.warning("no clear elbow in the inertia curve; picked k=%d by the tie rule", k_star)
    c, a, _ = fits[k_star]
    return ClusterReport(k_star, c, a, inertias, clear)


def average_vectors(texts: Sequence[Sequence[str]], vectors: dict) -> tuple[np.ndarray, list[int], int]:
    """Mean pretrained vector per token list, skipping unknown tokens.
    Returns (matrix, kept row indices, number dropped as empty)."""
    rows, kept = [], []
    for i, toks in enumerate(texts):
        vs = [vectors[t] for t in toks if t in vectors]
        if vs:
            rows.append(np.mean(vs, axis=0))
            kept.append(i)
    dim = len(next(iter(vectors.values()))) if vectors else 0
    mat = np.array(rows) if rows else np.zeros((0, dim))
    return mat, kept, len(texts) - len(kept)


# --------------------------------------------------------------------------
# reason distribution


def reason_distribution(instances, group_by: str = "section", top_n: int = 5) -> list[dict]:
    """Per reason, the ``top_n`` most frequent sections (or topics) with counts.

    Lead-section statements are grouped under ``"lead"``; instances without
    a topic are grouped under ``"unknown"`` when grouping by topic.
    """
    if group_by not in ("section", "topic"):
        raise ValueError("group_by must be 'section' or 'topic'")
    tallies: dict[str, Counter] = defaultdict(Counter)
    for inst in instances:
        s = inst.statement
        if group_by == "section":
            key = "lead" if s.is_lead else (s.section_heading.lower() or "lead")
        else:
            key = (inst.topic or "unknown").lower()
        tallies[inst.reason][key] += 1
    rows = []
    for reason in sorted(tallies):
        ranked = sorted(tallies[reason].items(), key=lambda kv: (-kv[1], kv[0]))
        for rank, (group, count) in enumerate(ranked[:top_n], 1):
            rows.append({"reason": reason, "rank": rank, "group": group, "count": count})
    return rows


def reason_counts(instances) -> list[tuple[str, int]]:
    c = Counter(inst.reason for inst in instances)
    return sorted(c.items(), key=lambda kv: (-kv[1], kv[0]))


def write_rows_csv(rows: list[dict], path, columns: Sequence[str]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=list(columns), lineterminator="\n", extrasaction="ignore")
        w.writeheader()
        for r in rows:
            w.writerow(r)


# --------------------------------------------------------------------------
# attention explanation report


def _shade(weight: float, peak: float) -> str:
    level = 0.0 if peak <= 0 else weight / peak
    # white -> saturated orange
    g = int(round(255 - 120 * level))
    b = int(round(255 - 255 * level))
    return f"#ff{g:02x}{b:02x}"


def write_attention_report(explanations: Sequence[dict], path) -> tuple[Path, Path]:
    """Write ``path`` (HTML) and ``path`` with ``.txt`` suffix.

    Each explanation dict carries ``text``, ``tokens``, ``weights``,
    ``group`` (predicted reason or label) and ``probability``.  Output bytes
    depend only on the explanations.
    """
    path = Path(path)
    txt_path = path.with_suffix(".txt")
    groups: dict[str, list[dict]] = defaultdict(list)
    for ex in explanations:
        if len(ex["tokens"]) != len(ex["weights"]):
            raise ValueError("one attention weight per token required")
        groups[ex["group"]].append(ex)

    h = ['<!DOCTYPE html>', '<html><head><meta charset="utf-8"><title>Attention report</title>',
         "<style>body{font-family:sans-serif;max-width:60em;margin:2em auto}"
         ".tok{padding:1px 3px;margin:1px;border-radius:3px;display:inline-block}"
         "table.legend td{padding:0 6px;font-size:80%}</style></head><body>",
         "<h1>Attention report</h1>"]
    t = []
    for group in sorted(groups):
        h.append(f"<h2>{html.escape(group)}</h2>")
        t.append(f"## {group}")
        for ex in groups[group]:
            w = np.asarray(ex["weights"], dtype=float)
            peak = float(w.max()) if w.size else 0.0
            spans = "".join(
                f'<span class="tok" style="background:{_shade(wi, peak)}" title="{wi:.4f}">{html.escape(tok)}</span>'
                for tok, wi in zip(ex["tokens"], w)
            )
            legend = "".join(f"<td>{html.escape(tok)}: {wi:.4f}</td>" for tok, wi in zip(ex["tokens"], w))
            h.append(f'<div class="stmt"><p>p = {ex["probability"]:.4f}</p><p>{spans}</p>'
                     f'<table class="legend"><tr>{legend}</tr></table>'
                     f"<p>sum of weights = {w.sum():.4f}</p></div>")
            t.append(f"p={ex['probability']:.4f}\t{ex['text']}")
            t.append("  " + " ".join(f"{tok}:{wi:.4f}" for tok, wi in zip(ex["tokens"], w)))
        t.append("")
    h.append("</body></html>")
    path.write_text("\n".join(h) + "\n", encoding="utf-8")
    txt_path.write_text("\n".join(t) + "\n", encoding="utf-8")
    return path, txt_path


def render_attention_report(model, statements, path) -> tuple[Path, Path]:
    """Explain ``statements`` with an attention model and write the report."""
    if not getattr(model, "uses_attention", False):
        raise ValueError(f"{getattr(model, 'variant', type(model).__name__)} has no attention layer")
    return write_attention_report(model.explain(list(statements)), path)
