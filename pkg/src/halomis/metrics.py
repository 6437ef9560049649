"""Binary classification metrics with explicit zero-denominator conventions."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import DegenerateLabels, EmptyEvaluation

METRIC_NAMES = ("accuracy", "precision", "recall", "f1", "pr_auc", "roc_auc")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    tn: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.tn + self.fn

    @classmethod
    def from_predictions(cls, y_true, y_pred) -> "ConfusionCounts":
        y_true = np.asarray(y_true).astype(int)
        y_pred = np.asarray(y_pred).astype(int)
        if y_true.shape != y_pred.shape:
            raise ValueError("y_true and y_pred differ in length")
        return cls(
            tp=int(np.sum((y_true == 1) & (y_pred == 1))),
            fp=int(np.sum((y_true == 0) & (y_pred == 1))),
            tn=int(np.sum((y_true == 0) & (y_pred == 0))),
            fn=int(np.sum((y_true == 1) & (y_pred == 0))),
        )


@dataclass
class MetricReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    pr_auc: float = float("nan")
    roc_auc: float = float("nan")
    # names of metrics that hit a zero denominator and were set to 0
    flags: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return asdict(self)


def metrics_from_confusion(counts: ConfusionCounts) -> MetricReport:
    total = counts.total
    if total <= 0:
        raise EmptyEvaluation("no samples evaluated")
    flags = []
    accuracy = (counts.tp + counts.tn) / total
    if counts.tp + counts.fp > 0:
        precision = counts.tp / (counts.tp + counts.fp)
    else:
        precision = 0.0
        flags.append("precision")
    if counts.tp + counts.fn > 0:
        recall = counts.tp / (counts.tp + counts.fn)
    else:
        recall = 0.0
        flags.append("recall")
    if precision + recall > 0:
        f1 = 2 * precision * recall / (precision + recall)
    else:
        f1 = 0.0
        flags.append("f1")
    return MetricReport(accuracy, precision, recall, f1, flags=flags)


def f1_score(y_true, y_pred) -> float:
    return metrics_from_confusion(ConfusionCounts.from_predictions(y_true, y_pred)).f1


def _check_binary(scores, labels):
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(int)
    if scores.shape != labels.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(labels.sum())
    if n_pos == 0 or n_pos == len(labels):
        raise DegenerateLabels("need at least one positive and one negative label")
    return scores, labels


def _midranks(x: np.ndarray) -> np.ndarray:
    order = np.argsort(x, kind="mergesort")
    xs = x[order]
    ranks = np.empty(len(x), dtype=float)
    i = 0
    while i < len(xs):
        j = i
        while j + 1 < len(xs) and xs[j + 1] == xs[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def roc_auc(scores, labels) -> float:
    """Mann-Whitney estimate: P(random positive outranks random negative), ties count 1/2."""
    scores, labels = _check_binary(scores, labels)
    ranks = _midranks(scores)
    n_pos = labels.sum()
    n_neg = len(labels) - n_pos
    u = ranks[labels == 1].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def pr_auc(scores, labels) -> float:
    """Step-wise area under the precision-recall curve (average precision).

    Thresholds are the distinct scores in descending order; each step adds
    precision at that threshold times the recall gained.
    """
    scores, labels = _check_binary(scores, labels)
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(1 - y)
    # last index of each run of equal scores
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1]
    tp, fp = tp[last], fp[last]
    precision = tp / (tp + fp)
    recall = tp / labels.sum()
    gained = np.diff(np.r_[0.0, recall])
    return float(np.sum(gained * precision))


def evaluate_predictions(y_true, y_pred, scores=None) -> MetricReport:
    """Threshold metrics from hard predictions plus ranking metrics from ``scores``."""
    report = metrics_from_confusion(ConfusionCounts.from_predictions(y_true, y_pred))
    if scores is not None:
        y = np.asarray(y_true).astype(int)
        if 0 < y.sum() < len(y):
            report.roc_auc = roc_auc(scores, y)
            report.pr_auc = pr_auc(scores, y)
        else:
            report.flags.extend(["roc_auc", "pr_auc"])
    return report
