"""Confusion matrices, precision/recall/F1 and Cohen's kappa.

This is the only module that reads the hidden ground truth of the unlabeled
pool (:func:`hidden_labels`).
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass

import numpy as np

from . import kernels
from .errors import EmptyMatrix, LabelOutOfRange, LengthMismatch


@dataclass
class ConfusionMatrix:
    counts: np.ndarray

    @property
    def n(self):
        return int(self.counts.sum())

    @property
    def K(self):
        return self.counts.shape[0]

    def normalized(self):
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)


@dataclass
class MetricsReport:
    precision: list
    recall: list
    f1: list
    support: list
    macro_precision: float
    macro_recall: float
    macro_f1: float
    weighted_precision: float
    weighted_recall: float
    weighted_f1: float
    kappa: float
    accuracy: float
    n: int

    def to_dict(self, one_minus=False):
        """Plain dict; ``one_minus`` renders every score as ``1 - score`` for display."""
        d = asdict(self)
        if one_minus:
            for k, v in d.items():
                if k in ("support", "n"):
                    continue
                d[k] = [1.0 - x for x in v] if isinstance(v, list) else 1.0 - v
        return d


def confusion(true_labels, predicted_labels, K):
    t = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if t.shape != p.shape:
        raise LengthMismatch(f"{len(t)} true labels vs {len(p)} predictions")
    if np.any((t < 0) | (t >= K)) or np.any((p < 0) | (p >= K)):
        raise LabelOutOfRange(f"labels must lie in 0..{K - 1}")
    return ConfusionMatrix(kernels.confusion_counts(t, p, K))


def cohen_kappa(cm):
    counts = cm.counts if isinstance(cm, ConfusionMatrix) else np.asarray(cm)
    n = counts.sum()
    if n <= 0:
        raise EmptyMatrix("kappa of an empty confusion matrix")
    n = float(n)
    p_o = np.trace(counts) / n
    p_e = float(np.dot(counts.sum(axis=1), counts.sum(axis=0))) / (n * n)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def prf1(cm):
    counts = cm.counts.astype(np.float64)
    n = counts.sum()
    if n <= 0:
        raise EmptyMatrix("metrics of an empty confusion matrix")
    diag = np.diag(counts)
    rows = counts.sum(axis=1)
    cols = counts.sum(axis=0)
    precision = np.divide(diag, cols, out=np.zeros_like(diag), where=cols > 0)
    recall = np.divide(diag, rows, out=np.zeros_like(diag), where=rows > 0)
    denom = precision + recall
    f1 = np.divide(2 * precision * recall, denom, out=np.zeros_like(diag), where=denom > 0)
    w = rows / n
    return MetricsReport(
        precision=precision.tolist(),
        recall=recall.tolist(),
        f1=f1.tolist(),
        support=[int(v) for v in rows],
        macro_precision=float(precision.mean()),
        macro_recall=float(recall.mean()),
        macro_f1=float(f1.mean()),
        weighted_precision=float(np.dot(w, precision)),
        weighted_recall=float(np.dot(w, recall)),
        weighted_f1=float(np.dot(w, f1)),
        kappa=cohen_kappa(cm),
        accuracy=float(diag.sum() / n),
        n=int(n),
    )


def report(true_labels, predicted_labels, K):
    return prf1(confusion(true_labels, predicted_labels, K))


def save_report(path, rep, **extra):
    payload = {"metrics": rep.to_dict() if rep is not None else None, **extra}
    with open(path, "w") as f:
        json.dump(payload, f, indent=1, sort_keys=True)
        f.write("\n")


def hidden_labels(split, ids):
    """True labels of pool samples; -1 where the source row had none."""
    truth = split._ground_truth
    return np.array([truth.get(int(i), -1) for i in ids], dtype=np.int64)


def pool_kappa(split, ids, assigned):
    """Kappa of assigned labels against hidden truth, skipping rows with no truth.

    Returns None when nothing is scorable.
    """
    truth = hidden_labels(split, ids)
    assigned = np.asarray(assigned, dtype=np.int64)
    keep = truth >= 0
    if not np.any(keep):
        return None
    return cohen_kappa(confusion(truth[keep], assigned[keep], split.num_classes))
