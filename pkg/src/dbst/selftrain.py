"""Iterative pseudo-labeling: Bayesian self-training and its DST / DEST baselines.

Each iteration trains a fresh classifier (capacity grown by the iteration
count) on the weighted labeled pool, scores the unlabeled pool, sets an
admission threshold from the uncertainties of correctly classified
train+valid samples, and moves everything under the threshold into the
labeled pool with an uncertainty-dependent weight.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _random, __version__
from .data import PSEUDO, admit_many
from .errors import ConfigError, EmptyList
from .metrics import pool_kappa
from .nn import BERNOULLI, MLPClassifier, Mode, NetworkConfig, TrainConfig, grow_capacity, scaled_widths
from .uncertainty import KENDALL_GAL, KWON, decompose, deterministic_sample, mc_sample

Q2, Q3 = "Q2", "Q3"
MIN_BATCH, PATIENCE = "MIN_BATCH", "PATIENCE"
CONTINUE, STOP = "CONTINUE", "STOP"
DBST, DST, DEST = "dbst", "dst", "dest"

TAU_POLICY_NOTE = (
    "tau is computed from uncertainties of correctly classified train+valid samples; "
    "the test split is excluded to avoid leaking evaluation data"
)

_QUANTILE = {Q2: 0.5, Q3: 0.75}


@dataclass
class SelfTrainConfig:
    # selection and weighting
    quartile: str = Q3
    gamma: float = 0.5
    intercept: float = -3.0
    use_weights: bool = True
    estimator: str = KENDALL_GAL
    T_mc: int = 30
    dst_threshold: float = 0.99
    ensemble_size: int = 5
    # training
    beta: float = 0.0
    epochs: int = 75
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.9
    clip_norm: float | None = 5.0
    aleatoric_T: int = 1
    # network and capacity schedule
    base_widths: list = field(default_factory=lambda: [64, 64])
    k0: int = 12
    nu: int = 6
    k_max: int = 24
    compounding_growth: bool = False
    dropout_mode: str = BERNOULLI
    keep_prob_input: float = 0.8
    keep_prob_hidden: float = 0.5
    temperature: float = 0.1
    prior_length_scale: float = 0.01
    aleatoric_head: bool = True
    # termination
    stop_rule: str = MIN_BATCH
    patience: int = 3
    max_iterations: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.quartile not in _QUANTILE:
            raise ConfigError(f"quartile must be Q2 or Q3, got {self.quartile!r}")
        if self.estimator not in (KWON, KENDALL_GAL):
            raise ConfigError(f"unknown estimator {self.estimator!r}")
        if self.stop_rule not in (MIN_BATCH, PATIENCE):
            raise ConfigError(f"unknown stop_rule {self.stop_rule!r}")
        if self.batch_size < 1 or self.epochs < 1 or self.T_mc < 1:
            raise ConfigError("batch_size, epochs and T_mc must be >= 1")
        if self.beta < 0:
            raise ConfigError("beta must be >= 0")


@dataclass
class IterationRecord:
    r: int
    k: int
    tau: float | None
    phi: float
    n_selected: int
    n_train: int
    n_unlabeled: int
    n_pseudo: int
    kappa_pool: float | None
    kappa_admitted: float | None
    valid_accuracy: float | None
    test_accuracy: float | None
    wall_time: float = 0.0

    def log_dict(self):
        d = asdict(self)
        d.pop("wall_time")
        return d


# -- scalar pieces --------------------------------------------------------------

def compute_tau(correct_uncertainties, quartile):
    """Q2/Q3 of the given uncertainties, linear interpolation at index (n-1)q."""
    values = np.asarray(correct_uncertainties, dtype=np.float64)
    if values.size == 0:
        raise EmptyList("no correctly classified samples to set the threshold from")
    if quartile not in _QUANTILE:
        raise ConfigError(f"quartile must be Q2 or Q3, got {quartile!r}")
    return float(np.quantile(values, _QUANTILE[quartile], method="linear"))


def phi(r, gamma, b):
    """``(1 - e^(gamma r + b)) / (1 + e^(gamma r + b))``, evaluated as ``-tanh((gamma r + b)/2)``."""
    return -math.tanh((gamma * r + b) / 2.0)


def weight(total_variance, phi_value):
    """Importance weight ``exp(Var)^(-phi)``."""
    return np.exp(-phi_value * np.asarray(total_variance, dtype=np.float64))


def stop_check(rule, history, batch_size, patience=3):
    if not history:
        raise EmptyList("stop_check needs at least one iteration")
    if rule == MIN_BATCH:
        return STOP if history[-1] < batch_size else CONTINUE
    if rule == PATIENCE:
        tail = history[-patience:]
        return STOP if len(tail) == patience and all(n == 0 for n in tail) else CONTINUE
    raise ConfigError(f"unknown stop rule {rule!r}")


def select_and_admit(split, ids, totals, labels, tau, phi_value, use_weights=True):
    """Admit every sample whose total uncertainty is strictly below ``tau``.

    ``ids``, ``totals`` and ``labels`` are aligned. Returns ``(split, mask)``
    where ``mask`` flags admitted entries.
    """
    totals = np.asarray(totals, dtype=np.float64)
    mask = totals < tau
    if not np.any(mask):
        return split, mask
    w = weight(totals[mask], phi_value) if use_weights else np.ones(int(mask.sum()))
    admit_many(split, np.asarray(ids)[mask], np.asarray(labels)[mask], w)
    return split, mask


# -- models ----------------------------------------------------------------------

def mlp_factory(cfg, input_dim, num_classes):
    """Build ``make(k, rng) -> MLPClassifier`` for the reference network."""
    def make(k, rng):
        net = NetworkConfig(
            input_dim=input_dim,
            num_classes=num_classes,
            layer_widths=scaled_widths(cfg.base_widths, k, cfg.k0),
            dropout_mode=cfg.dropout_mode,
            keep_prob_input=cfg.keep_prob_input,
            keep_prob_hidden=cfg.keep_prob_hidden,
            temperature=cfg.temperature,
            prior_length_scale=cfg.prior_length_scale,
            aleatoric_head=cfg.aleatoric_head,
        )
        train = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr,
                            momentum=cfg.momentum, beta=cfg.beta, aleatoric_T=cfg.aleatoric_T,
                            clip_norm=cfg.clip_norm)
        return MLPClassifier(net, train, rng)
    return make


def _accuracy(models, pool):
    if len(pool) == 0:
        return None
    probs = np.mean([m.predict_proba(pool.X) for m in models], axis=0)
    return float(np.mean(np.argmax(probs, axis=1) == pool.y))


# -- the loop -------------------------------------------------------------------

class RunLog:
    """Append-only JSON-lines run log (header line, then one line per iteration)."""

    def __init__(self, path=None, timings_path=None):
        self.path = path
        self.timings_path = timings_path
        for p in (path, timings_path):
            if p is not None:
                open(p, "w").close()

    def _write(self, path, obj):
        if path is None:
            return
        with open(path, "a") as f:
            f.write(json.dumps(obj, sort_keys=True) + "\n")

    def header(self, method, cfg):
        self._write(self.path, {
            "type": "header",
            "method": method,
            "config": asdict(cfg),
            "code_version": __version__,
            "seed": cfg.seed,
            "tau_policy_note": TAU_POLICY_NOTE,
        })

    def iteration(self, rec):
        self._write(self.path, {"type": "iteration", **rec.log_dict()})
        self._write(self.timings_path, {"r": rec.r, "wall_time": rec.wall_time})

    def error(self, exc):
        self._write(self.path, {"type": "error", "error": f"{type(exc).__name__}: {exc}"})


class SelfTrainer:
    """Holds the state of one self-training run (iteration, capacity, pools, log)."""

    def __init__(self, split, cfg, method=DBST, factory=None, log=None):
        if method not in (DBST, DST, DEST):
            raise ConfigError(f"unknown method {method!r}")
        if method == DEST and cfg.ensemble_size < 2:
            raise ConfigError("an ensemble needs at least 2 members")
        if len(split.train) == 0:
            raise ConfigError("self-training needs a non-empty labeled train split")
        self.split = split.copy()
        self.cfg = cfg
        self.method = method
        self.factory = factory or mlp_factory(cfg, split.feature_dim, split.num_classes)
        self.log = log or RunLog()
        self.r = 0
        self.k = cfg.k0
        self.tau = None
        self.records = []
        self.admissions = []
        self.models = []
        self._last_pool_pred = {}

    # one model (or ensemble) trained on the current labeled pool
    def _train(self):
        cfg = self.cfg
        members = cfg.ensemble_size if self.method == DEST else 1
        train = self.split.train
        models = []
        for m in range(members):
            model = self.factory(self.k, _random.stream(cfg.seed, "init", self.r, m))
            model.fit(train.X, train.y, train.weight, _random.stream(cfg.seed, "train", self.r, m))
            models.append(model)
        return models

    def _score(self, models, X, stream_name):
        """``(predicted labels, selection score)``; lower score = more certain."""
        cfg = self.cfg
        if self.method == DST:
            probs = models[0].predict_proba(X)
            return np.argmax(probs, axis=1), -probs.max(axis=1)
        if self.method == DEST:
            mc = deterministic_sample(models, X)
            rep = decompose(mc, KENDALL_GAL)
        else:
            rng = _random.stream(cfg.seed, stream_name, self.r)
            mc = mc_sample(models[0], X, cfg.T_mc, rng)
            rep = decompose(mc, cfg.estimator)
        return np.asarray(rep.predicted_class), np.asarray(rep.total)

    def _threshold(self, models):
        if self.method == DST:
            return -self.cfg.dst_threshold
        tv_X = np.concatenate([self.split.train.X, self.split.valid.X])
        tv_y = np.concatenate([self.split.train.y, self.split.valid.y])
        pred, score = self._score(models, tv_X, "dropout_tau")
        correct = pred == tv_y
        if not np.any(correct):
            return -np.inf
        return compute_tau(score[correct], self.cfg.quartile)

    def step(self):
        cfg = self.cfg
        start = time.perf_counter()
        self.r += 1
        self.k = grow_capacity(cfg.k0, cfg.nu, self.r, cfg.k_max, cfg.compounding_growth)
        models = self._train()
        self.models = models
        phi_r = phi(self.r, cfg.gamma, cfg.intercept)
        n_selected = 0
        tau_logged = None
        U = self.split.unlabeled
        if len(U) > 0:
            pred, score = self._score(models, U.X, "dropout")
            tau = self._threshold(models)
            self.tau = tau
            use_w = cfg.use_weights and self.method != DST
            ids = U.ids.copy()
            _, mask = select_and_admit(self.split, ids, score, pred, tau, phi_r, use_w)
            n_selected = int(mask.sum())
            w = weight(score[mask], phi_r) if use_w else np.ones(n_selected)
            for i, lbl, s, wi in zip(ids[mask], pred[mask], score[mask], w):
                self.admissions.append({"r": self.r, "id": int(i), "label": int(lbl),
                                        "score": float(s), "tau": float(tau), "weight": float(wi)})
            self._last_pool_pred = {int(i): int(p) for i, p in zip(ids[~mask], pred[~mask])}
            tau_logged = cfg.dst_threshold if self.method == DST else (None if tau == -np.inf else tau)
        rec = IterationRecord(
            r=self.r,
            k=self.k,
            tau=tau_logged,
            phi=phi_r,
            n_selected=n_selected,
            n_train=len(self.split.train),
            n_unlabeled=len(self.split.unlabeled),
            n_pseudo=int(np.sum(self.split.train.origin == PSEUDO)),
            kappa_pool=self.pool_kappa(),
            kappa_admitted=self.admitted_kappa(),
            valid_accuracy=_accuracy(models, self.split.valid),
            test_accuracy=_accuracy(models, self.split.test),
            wall_time=time.perf_counter() - start,
        )
        self.records.append(rec)
        self.log.iteration(rec)
        return rec

    def admitted_kappa(self):
        """Kappa of admitted pseudo-labels against the hidden truth."""
        train = self.split.train
        mask = train.origin == PSEUDO
        if not np.any(mask):
            return None
        return pool_kappa(self.split, train.ids[mask], train.y[mask])

    def pool_kappa(self):
        """Kappa over admitted pseudo-labels plus current predictions for the rest of the pool."""
        train = self.split.train
        mask = train.origin == PSEUDO
        ids = list(train.ids[mask])
        labels = list(train.y[mask])
        for i in self.split.unlabeled.ids:
            if int(i) in self._last_pool_pred:
                ids.append(int(i))
                labels.append(self._last_pool_pred[int(i)])
        if not ids:
            return None
        return pool_kappa(self.split, ids, labels)

    def done(self):
        if len(self.split.unlabeled) == 0:
            return True
        if self.r >= self.cfg.max_iterations:
            return True
        history = [rec.n_selected for rec in self.records]
        return stop_check(self.cfg.stop_rule, history, self.cfg.batch_size, self.cfg.patience) == STOP

    def run(self):
        self.log.header(self.method, self.cfg)
        try:
            while True:
                self.step()
                if self.done():
                    break
        except Exception as exc:
            self.log.error(exc)
            raise
        return self.records


def run_dbst(split, cfg, factory=None, log=None):
    return SelfTrainer(split, cfg, DBST, factory, log).run()


def run_dst(split, cfg, factory=None, log=None):
    return SelfTrainer(split, cfg, DST, factory, log).run()


def run_dest(split, cfg, ensemble_size=None, factory=None, log=None):
    if ensemble_size is not None:
        if ensemble_size < 2:
            raise ConfigError("an ensemble needs at least 2 members")
        cfg = SelfTrainConfig(**{**asdict(cfg), "ensemble_size": ensemble_size})
    return SelfTrainer(split, cfg, DEST, factory, log).run()


def write_plot_csv(path, records):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["r", "unlabeled_count", "valid_acc", "test_acc", "kappa"])
        for rec in records:
            w.writerow([rec.r, rec.n_unlabeled, _fmt(rec.valid_accuracy), _fmt(rec.test_accuracy),
                        _fmt(rec.kappa_pool)])


def _fmt(v):
    return "" if v is None else repr(float(v))
