"""Discrimination, error/calibration and confusion-matrix metrics for binary scores.

The positive class (label 1) is a dead / rug-pulled token.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import NoPositives, RangeError, SingleClass

LOGLOSS_EPS = 1e-15


def _arrays(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores vs {y.size} labels")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if not np.all(np.isfinite(s)):
        raise RangeError("scores must be finite")
    return s, y.astype(int)


def _tie_groups(s: np.ndarray, descending: bool = False):
    """Yield index arrays of equal-score groups in score order."""
    order = np.argsort(-s if descending else s, kind="mergesort")
    sorted_s = s[order]
    bounds = np.flatnonzero(np.diff(sorted_s)) + 1
    return np.split(order, bounds)


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate: P(score+ > score-) + P(tie) / 2 over all pos/neg pairs."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC AUC needs both classes")
    # Mid-ranks (1-based) of positives; exact in float for n < 2**26.
    rank_sum = 0.0
    seen = 0
    for group in _tie_groups(s):
        mid = seen + (len(group) + 1) / 2
        rank_sum += mid * int(y[group].sum())
        seen += len(group)
    u = rank_sum - n_pos * (n_pos + 1) / 2
    return u / (n_pos * n_neg)


def pr_auc(scores, labels) -> float:
    """Average precision: sum over distinct thresholds of (delta recall) * precision."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("PR AUC needs at least one positive")
    tp = fp = 0
    prev_recall = 0.0
    ap = 0.0
    for group in _tie_groups(s, descending=True):
        g_pos = int(y[group].sum())
        tp += g_pos
        fp += len(group) - g_pos
        recall = tp / n_pos
        ap += (recall - prev_recall) * (tp / (tp + fp))
        prev_recall = recall
    return ap


def roc_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) points, starting at (inf, 0, 0)."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC curve needs both classes")
    points = [(math.inf, 0.0, 0.0)]
    tp = fp = 0
    for group in _tie_groups(s, descending=True):
        g_pos = int(y[group].sum())
        tp += g_pos
        fp += len(group) - g_pos
        points.append((float(s[group[0]]), fp / n_neg, tp / n_pos))
    return points


def pr_curve(scores, labels) -> list[tuple[float, float, float]]:
    """(threshold, recall, precision) at each distinct score, descending."""
    s, y = _arrays(scores, labels)
    n_pos = int(y.sum())
    if n_pos == 0:
        raise NoPositives("PR curve needs at least one positive")
    points = []
    tp = fp = 0
    for group in _tie_groups(s, descending=True):
        g_pos = int(y[group].sum())
        tp += g_pos
        fp += len(group) - g_pos
        points.append((float(s[group[0]]), tp / n_pos, tp / (tp + fp)))
    return points


def error_metrics(scores, labels, eps: float = LOGLOSS_EPS) -> dict[str, float]:
    s, y = _arrays(scores, labels)
    if s.size == 0:
        raise ValueError("no scores")
    if np.any((s < 0) | (s > 1)):
        raise RangeError("probabilities must lie in [0, 1]")
    diff = s - y
    mse = math.fsum(diff * diff) / s.size
    mae = math.fsum(np.abs(diff)) / s.size
    p = np.clip(s, eps, 1 - eps)
    ll = -math.fsum(np.where(y == 1, np.log(p), np.log1p(-p))) / s.size
    return {"mse": mse, "mae": mae, "brier": mse, "logloss": ll}


@dataclass(frozen=True)
class Confusion:
    tn: int
    fp: int
    fn: int
    tp: int

    @property
    def total(self) -> int:
        return self.tn + self.fp + self.fn + self.tp

    @property
    def accuracy(self) -> float:
        return (self.tn + self.tp) / self.total

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 2 * self.tp / denom if denom else 0.0


def confusion_at(scores, labels, threshold: float = 0.5) -> Confusion:
    """Scores equal to the threshold count as positive predictions."""
    s, y = _arrays(scores, labels)
    pred = s >= threshold
    tp = int(np.sum(pred & (y == 1)))
    fp = int(np.sum(pred & (y == 0)))
    fn = int(np.sum(~pred & (y == 1)))
    tn = int(np.sum(~pred & (y == 0)))
    return Confusion(tn, fp, fn, tp)


def classification_metrics(scores, labels, threshold: float = 0.5) -> dict:
    c = confusion_at(scores, labels, threshold)
    return {"accuracy": c.accuracy, "f1": c.f1, "confusion": c}


@dataclass(frozen=True)
class MetricsReport:
    model: str
    n: int
    threshold: float
    accuracy: float
    f1: float
    roc_auc: float
    pr_auc: float
    mse: float
    mae: float
    brier: float
    logloss: float
    tn: int
    fp: int
    fn: int
    tp: int

    def as_dict(self) -> dict:
        return asdict(self)


REPORT_FIELDS = tuple(MetricsReport.__dataclass_fields__)


def metrics_report(model: str, scores, labels, threshold: float = 0.5) -> MetricsReport:
    s, y = _arrays(scores, labels)
    cls = classification_metrics(s, y, threshold)
    err = error_metrics(s, y)
    c = cls["confusion"]
    return MetricsReport(
        model=model, n=int(s.size), threshold=float(threshold),
        accuracy=cls["accuracy"], f1=cls["f1"],
        roc_auc=roc_auc(s, y), pr_auc=pr_auc(s, y),
        mse=err["mse"], mae=err["mae"], brier=err["brier"], logloss=err["logloss"],
        tn=c.tn, fp=c.fp, fn=c.fn, tp=c.tp,
    )
