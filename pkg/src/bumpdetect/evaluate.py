"""Accuracy, ROC curves, AUC and threshold sweeps."""
from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .validation import check_scores


@dataclass(frozen=True)
class RocCurve:
    """ROC points from (0, 0) to (1, 1).

    ``thresholds[k]`` is the score cut (class 1 iff score >= cut) giving
    point ``k``; the first point uses ``+inf``.
    """

    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray

    @property
    def points(self):
        return list(zip(self.fpr.tolist(), self.tpr.tolist()))


def accuracy(predictions, labels) -> float:
    p = np.asarray(predictions)
    y = np.asarray(labels)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {y.shape} labels")
    if p.size == 0:
        raise ValueError("accuracy of an empty set is undefined")
    return float(np.mean(p == y))


def confusion(scores, labels, threshold=0.5):
    """``(tp, fp, tn, fn)`` at ``score >= threshold``."""
    s, y = check_scores(scores, labels)
    pos = s >= threshold
    tp = int(np.sum(pos & (y == 1)))
    fp = int(np.sum(pos & (y == 0)))
    return tp, fp, int(np.sum(y == 0)) - fp, int(np.sum(y == 1)) - tp


def roc(scores, labels) -> RocCurve:
    """Sweep thresholds over the distinct scores, highest first; ties move together."""
    s, y = check_scores(scores, labels)
    n_pos, n_neg = int(y.sum()), int((1 - y).sum())
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes present")
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    last = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[last]
    fps = (last + 1) - tps
    tpr = np.r_[0.0, tps / n_pos]
    fpr = np.r_[0.0, fps / n_neg]
    return RocCurve(fpr, tpr, np.r_[np.inf, s[last]])


def auc(curve: RocCurve) -> float:
    """Trapezoidal area under the curve."""
    return float(np.sum(np.diff(curve.fpr) * (curve.tpr[1:] + curve.tpr[:-1]) / 2.0))


def roc_auc(scores, labels) -> float:
    return auc(roc(scores, labels))


def threshold_sweep(scores, labels, thresholds=None):
    """Rows ``{threshold, tpr, fpr, precision}`` at ``score >= threshold``.

    Defaults to every distinct score plus one cut above the maximum.
    Precision is NaN when nothing is predicted positive.
    """
    s, y = check_scores(scores, labels)
    if thresholds is None:
        uniq = np.unique(s)
        thresholds = np.r_[uniq, np.nextafter(uniq[-1], np.inf)]
    n_pos, n_neg = max(int(y.sum()), 1), max(int((1 - y).sum()), 1)
    rows = []
    for t in np.asarray(thresholds, dtype=np.float64):
        pos = s >= t
        tp = int(np.sum(pos & (y == 1)))
        fp = int(np.sum(pos & (y == 0)))
        rows.append({"threshold": float(t), "tpr": tp / n_pos, "fpr": fp / n_neg,
                     "precision": tp / (tp + fp) if tp + fp else float("nan")})
    return rows


def write_roc_csv(curve: RocCurve, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["threshold", "fpr", "tpr"])
        for t, f, p in zip(curve.thresholds, curve.fpr, curve.tpr):
            w.writerow([repr(float(t)), repr(float(f)), repr(float(p))])


def write_auc_table(rows, path):
    """``rows`` of ``(model name, auc)`` as a two-column CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["model", "auc"])
        for name, value in rows:
            w.writerow([name, f"{value:.5f}"])


__all__ = ["RocCurve", "accuracy", "confusion", "roc", "auc", "roc_auc",
           "threshold_sweep", "write_roc_csv", "write_auc_table"]
