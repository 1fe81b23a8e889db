"""Monte Carlo dropout sampling and predictive-uncertainty estimators.

Two estimators are provided:

``KWON``
    multinomial-variance decomposition of the softmax samples;
    aleatoric = mean_t sum_k p_tk (1 - p_tk), epistemic = mean_t ||p_t - p_bar||^2.
``KENDALL_GAL``
    mean predicted aleatoric variance ``exp(s_t)`` plus the entropy of the
    mean softmax.

Arrays are batched: ``probs`` has shape (T, n, K) and every report field has
shape (n,). A single sample may be passed as (T, K), in which case report
fields are scalars.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import EmptySamples, MissingAleatoricHead
from .losses import softmax
from .nn import Mode

KWON = "KWON"
KENDALL_GAL = "KENDALL_GAL"


@dataclass
class McPrediction:
    probs: np.ndarray
    log_aleatoric: np.ndarray | None = None

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        # a (T, K) array is one sample; stored internally as (T, 1, K)
        self._single = self.probs.ndim == 2
        if self._single:
            self.probs = self.probs[:, None, :]
        if self.log_aleatoric is not None:
            s = np.asarray(self.log_aleatoric, dtype=np.float64)
            self.log_aleatoric = s.reshape(self.probs.shape[:2])

    @property
    def T(self):
        return self.probs.shape[0]


@dataclass
class UncertaintyReport:
    aleatoric: np.ndarray
    epistemic: np.ndarray
    total: np.ndarray
    mean_probs: np.ndarray
    predicted_class: np.ndarray
    estimator: str

    def records(self, ids):
        """One JSON-ready dict per sample."""
        out = []
        for j, i in enumerate(ids):
            out.append({
                "id": int(i),
                "y_hat": int(self.predicted_class[j]),
                "aleatoric": float(self.aleatoric[j]),
                "epistemic": float(self.epistemic[j]),
                "total": float(self.total[j]),
                "mean_probs": [float(v) for v in self.mean_probs[j]],
            })
        return out


def dump_reports(path, report, ids):
    with open(path, "w") as f:
        for rec in report.records(ids):
            f.write(json.dumps(rec, sort_keys=True) + "\n")


def mc_sample(model, features, T, rng):
    """T stochastic (MC_TEST) forward passes, softmaxed."""
    if T < 1:
        raise EmptySamples("T must be >= 1")
    probs, logs = [], []
    for _ in range(T):
        out = model.forward(features, Mode.MC_TEST, rng)
        probs.append(softmax(out.logits))
        if out.log_aleatoric is not None:
            logs.append(out.log_aleatoric)
    return McPrediction(np.stack(probs), np.stack(logs) if logs else None)


def deterministic_sample(models, features):
    """One deterministic forward per model, stacked as a sample set (ensembles)."""
    probs, logs = [], []
    for m in models:
        out = m.forward(features, Mode.DETERMINISTIC)
        probs.append(softmax(out.logits))
        if out.log_aleatoric is not None:
            logs.append(out.log_aleatoric)
    return McPrediction(np.stack(probs), np.stack(logs) if len(logs) == len(models) else None)


def argmax_lowest(p):
    """Argmax along the last axis; ties go to the lowest index (numpy's rule)."""
    return np.argmax(p, axis=-1)


def _finish(mc, aleatoric, epistemic, estimator):
    mean = mc.probs.mean(axis=0)
    report = UncertaintyReport(aleatoric, epistemic, aleatoric + epistemic, mean,
                               argmax_lowest(mean), estimator)
    if mc._single:
        report.aleatoric = float(report.aleatoric[0])
        report.epistemic = float(report.epistemic[0])
        report.total = float(report.total[0])
        report.mean_probs = report.mean_probs[0]
        report.predicted_class = int(report.predicted_class[0])
    return report


def kwon_decompose(mc):
    if mc.probs.size == 0 or mc.T < 1:
        raise EmptySamples("no Monte Carlo samples")
    aleatoric, epistemic = kernels.kwon_terms(mc.probs)
    return _finish(mc, aleatoric, epistemic, KWON)


def kendall_gal_variance(mc):
    if mc.probs.size == 0 or mc.T < 1:
        raise EmptySamples("no Monte Carlo samples")
    if mc.log_aleatoric is None:
        raise MissingAleatoricHead("KENDALL_GAL needs predicted log aleatoric variances")
    aleatoric, epistemic = kernels.kendall_gal_terms(mc.probs, mc.log_aleatoric)
    return _finish(mc, aleatoric, epistemic, KENDALL_GAL)


def entropy_only(mc):
    """Entropy of the mean softmax with zero aleatoric term (models without a variance head)."""
    zeros = np.zeros(mc.probs.shape[:2])
    aleatoric, epistemic = kernels.kendall_gal_terms(mc.probs, np.full_like(zeros, -np.inf))
    return _finish(mc, aleatoric, epistemic, KENDALL_GAL)


def decompose(mc, estimator):
    if estimator == KWON:
        return kwon_decompose(mc)
    if estimator == KENDALL_GAL:
        if mc.log_aleatoric is None:
            return entropy_only(mc)
        return kendall_gal_variance(mc)
    raise ValueError(f"unknown estimator {estimator!r}")


def pseudo_label(mc, estimator=KENDALL_GAL):
    """``(y_hat, total variance)`` under the chosen estimator."""
    report = kendall_gal_variance(mc) if estimator == KENDALL_GAL else kwon_decompose(mc)
    return report.predicted_class, report.total
