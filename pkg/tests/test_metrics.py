import numpy as np
import pytest
from hypothesis import given, settings
import hypothesis.strategies as st

from shadowphase.metrics import accuracy, auc, best_threshold, classification_metrics, roc_curve


def pairwise_auc(scores, labels):
    """Oracle: probability a positive outscores a negative, ties counting half."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = (pos[:, None] > neg[None, :]).sum() + 0.5 * (pos[:, None] == neg[None, :]).sum()
    return wins / (len(pos) * len(neg))


def test_perfect_and_inverted():
    y = np.array([0, 0, 1, 1])
    fpr, tpr = roc_curve([0.1, 0.2, 0.8, 0.9], y)
    assert auc(fpr, tpr) == 1.0
    fpr, tpr = roc_curve([0.9, 0.8, 0.2, 0.1], y)
    assert auc(fpr, tpr) == 0.0


def test_roc_endpoints_and_monotone():
    rng = np.random.default_rng(0)
    fpr, tpr = roc_curve(rng.random(50), rng.integers(0, 2, 50) | np.r_[1, 0, np.zeros(48, int)])
    assert (fpr[0], tpr[0]) == (0, 0) and (fpr[-1], tpr[-1]) == (1, 1)
    assert np.all(np.diff(fpr) >= 0) and np.all(np.diff(tpr) >= 0)


def test_all_ties_give_half():
    fpr, tpr = roc_curve(np.full(10, 0.3), np.r_[np.zeros(5), np.ones(5)])
    assert auc(fpr, tpr) == 0.5


def test_single_class_rejected():
    with pytest.raises(ValueError):
        roc_curve([0.1, 0.2], [1, 1])


@settings(max_examples=50)
@given(st.lists(st.tuples(st.integers(0, 5), st.booleans()), min_size=2, max_size=40))
def test_auc_matches_pairwise_oracle(pairs):
    scores = np.array([p[0] for p in pairs], float) / 5
    labels = np.array([p[1] for p in pairs], int)
    if labels.min() == labels.max():
        return
    fpr, tpr = roc_curve(scores, labels)
    assert abs(auc(fpr, tpr) - pairwise_auc(scores, labels)) < 1e-12


def test_accuracy_and_metrics():
    assert accuracy([1, 0, 1], [1, 1, 1]) == pytest.approx(2 / 3)
    m = classification_metrics([0.2, 0.6, 0.7, 0.4], [0, 1, 1, 1])
    assert m.accuracy == 0.75 and m.auc == 1.0
    assert m.to_json()["roc"][0] == [0.0, 0.0]


def test_best_threshold():
    thr, acc = best_threshold([0.1, 0.2, 0.3, 0.9], [0, 0, 1, 1])
    assert acc == 1.0 and 0.2 < thr < 0.3
    thr, acc = best_threshold([-np.inf, 1.0, 2.0], [0, 1, 1])
    assert acc == 1.0
