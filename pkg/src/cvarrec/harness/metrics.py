from __future__ import annotations

import numpy as np
from scipy.stats import rankdata


class UndefinedMetricError(ValueError):
    pass


def auc(scores, labels) -> float:
    """ROC AUC as the Mann-Whitney U statistic over average ranks (ties count one half)."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    if scores.shape != labels.shape:
        raise ValueError(f"scores {scores.shape} and labels {labels.shape} differ")
    pos = labels == 1
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedMetricError("AUC is undefined when only one class is present")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def f1(scores, labels, threshold: float = 0.5) -> float:
    pred = np.asarray(scores) >= threshold
    truth = np.asarray(labels) == 1
    tp = int(np.sum(pred & truth))
    if tp == 0:
        return 0.0
    precision = tp / int(pred.sum())
    recall = tp / int(truth.sum())
    return 2 * precision * recall / (precision + recall)
