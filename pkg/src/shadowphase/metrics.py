"""Binary classification metrics: accuracy, ROC, AUC, best threshold."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class Metrics:
    accuracy: float
    auc: float
    roc: list[tuple[float, float]]
    probabilities: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"accuracy": self.accuracy, "auc": self.auc,
                "roc": [list(p) for p in self.roc], "probabilities": self.probabilities}


def roc_curve(scores, labels) -> tuple[np.ndarray, np.ndarray]:
    """ROC points from a threshold sweep over the sorted scores.

    Tied scores are stepped together, so the curve is exact for ties.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(bool)
    n_pos, n_neg = labels.sum(), (~labels).sum()
    if n_pos == 0 or n_neg == 0:
        raise ValueError("ROC needs both classes")
    order = np.argsort(-scores, kind="mergesort")
    s, y = scores[order], labels[order]
    tp = np.cumsum(y)
    fp = np.cumsum(~y)
    last = np.r_[s[1:] != s[:-1], True]
    tpr = np.r_[0.0, tp[last] / n_pos]
    fpr = np.r_[0.0, fp[last] / n_neg]
    return fpr, tpr


def auc(fpr, tpr) -> float:
    return float(np.trapezoid(tpr, fpr))


def accuracy(pred, labels) -> float:
    return float(np.mean(np.asarray(pred) == np.asarray(labels)))


def best_threshold(scores, labels) -> tuple[float, float]:
    """Threshold maximising accuracy of ``score > threshold``; returns (threshold, accuracy).

    Uses the labels being scored, so the accuracy is optimistic.
    """
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels).astype(int)
    finite = np.unique(scores[np.isfinite(scores)])
    if finite.size == 0:
        cands = np.array([0.0])
    else:
        mids = (finite[1:] + finite[:-1]) / 2
        cands = np.r_[finite[0] - 1.0, mids, finite[-1]]
    accs = [accuracy(scores > c, labels) for c in cands]
    i = int(np.argmax(accs))
    return float(cands[i]), float(accs[i])


def classification_metrics(probabilities, labels, threshold: float = 0.5) -> Metrics:
    p = np.asarray(probabilities, dtype=np.float64)
    fpr, tpr = roc_curve(p, labels)
    return Metrics(accuracy(p > threshold, labels), auc(fpr, tpr),
                   list(zip(fpr.tolist(), tpr.tolist())), p.tolist())
