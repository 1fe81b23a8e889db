"""A small fully-connected classifier with Bernoulli or concrete dropout.

The network is ``dropout -> dense -> relu -> dropout -> dense ... -> logits``
with an optional scalar head predicting the log aleatoric variance from the
same (dropped) features as the logits. Gradients are computed by hand in
:meth:`MLP.backward`; every dropout site stores its mask or uniform noise so
a recorded forward pass can be differentiated exactly.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import asdict, dataclass, field
from typing import Protocol

import numpy as np

from . import losses
from .errors import (
    ConfigError,
    DimensionMismatch,
    DomainError,
    GraphNotRecorded,
    NonFiniteGradient,
)

CHECKPOINT_VERSION = 1
_U_EPS = 1e-12


class Mode(enum.Enum):
    TRAIN = "TRAIN"
    MC_TEST = "MC_TEST"
    DETERMINISTIC = "DETERMINISTIC"


BERNOULLI = "BERNOULLI"
CONCRETE = "CONCRETE"


@dataclass
class NetworkConfig:
    input_dim: int
    num_classes: int
    layer_widths: list = field(default_factory=lambda: [64, 64])
    dropout_mode: str = BERNOULLI
    keep_prob_input: float = 0.8
    keep_prob_hidden: float = 0.5
    temperature: float = 0.1
    prior_length_scale: float = 0.01
    aleatoric_head: bool = False

    def __post_init__(self):
        self.layer_widths = [int(w) for w in self.layer_widths]
        if self.dropout_mode not in (BERNOULLI, CONCRETE):
            raise ConfigError(f"unknown dropout_mode {self.dropout_mode!r}")
        for name in ("keep_prob_input", "keep_prob_hidden"):
            v = getattr(self, name)
            # keep = 1 disables a Bernoulli site; concrete sites need p in (0, 1)
            if not (0.0 < v <= 1.0) or (self.dropout_mode == CONCRETE and v >= 1.0):
                raise ConfigError(f"{name} must lie in (0, 1), got {v}")
        if any(w < 1 for w in self.layer_widths):
            raise ConfigError("layer widths must be >= 1")
        if self.temperature <= 0 or self.prior_length_scale <= 0:
            raise ConfigError("temperature and prior_length_scale must be > 0")


@dataclass
class ModelOutput:
    logits: np.ndarray
    log_aleatoric: np.ndarray | None = None


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    return np.exp(-np.logaddexp(0.0, -x))


def _logit(p):
    return math.log(p) - math.log1p(-p)


def concrete_mask(p, t, u):
    """Relaxed drop indicator ``sigmoid((logit p + logit u) / t)``."""
    p_arr = np.asarray(p, dtype=np.float64)
    u_arr = np.asarray(u, dtype=np.float64)
    if np.any((p_arr <= 0) | (p_arr >= 1)) or np.any((u_arr <= 0) | (u_arr >= 1)) or t <= 0:
        raise DomainError("concrete_mask needs p, u in (0, 1) and t > 0")
    x = (np.log(p_arr) - np.log1p(-p_arr) + np.log(u_arr) - np.log1p(-u_arr)) / t
    out = sigmoid(x)
    return float(out) if out.ndim == 0 else out


def bernoulli_entropy(p):
    return -(p * math.log(p) + (1.0 - p) * math.log1p(-p)) if 0.0 < p < 1.0 else 0.0


def concrete_kl(p, weight_sq_norm, input_dim, N, length_scale=0.01):
    """Per-layer dropout KL approximation, scaled by ``1/N``."""
    if N < 1:
        raise ConfigError("N must be >= 1")
    return (length_scale ** 2 * (1.0 - p) / 2.0 * weight_sq_norm
            - input_dim * bernoulli_entropy(p)) / N


def grow_capacity(k0, nu, r, k_max, compounding=False):
    """Capacity at self-training iteration ``r`` (1-based)."""
    if r < 1:
        raise ConfigError("iteration r starts at 1")
    if not compounding:
        return min(k0 + nu * (r - 1), k_max)
    k = k0
    for i in range(1, r + 1):
        k = min(k + nu * (i - 1), k_max)
    return k


def scaled_widths(base_widths, k, k0):
    return [max(1, int(round(w * k / k0))) for w in base_widths]


class MLP:
    """Fully-connected network; parameters live in the ``params`` dict."""

    def __init__(self, config, rng):
        self.config = config
        dims = [config.input_dim] + list(config.layer_widths) + [config.num_classes]
        self.n_layers = len(dims) - 1
        self.params = {}
        for i in range(self.n_layers):
            fan_in = dims[i]
            self.params[f"W{i}"] = rng.normal(0.0, math.sqrt(2.0 / fan_in), size=(dims[i], dims[i + 1]))
            self.params[f"b{i}"] = np.zeros(dims[i + 1])
        if config.aleatoric_head:
            self.params["Ws"] = rng.normal(0.0, math.sqrt(2.0 / dims[-2]), size=(dims[-2], 1))
            self.params["bs"] = np.zeros(1)
        if config.dropout_mode == CONCRETE:
            for i in range(self.n_layers):
                self.params[f"drop_logit{i}"] = np.array(_logit(1.0 - self._keep_default(i)))
        self._tape = None

    # -- dropout bookkeeping -------------------------------------------------

    def _keep_default(self, site):
        return self.config.keep_prob_input if site == 0 else self.config.keep_prob_hidden

    def drop_prob(self, site):
        if self.config.dropout_mode == CONCRETE:
            return float(sigmoid(self.params[f"drop_logit{site}"]))
        return 1.0 - self._keep_default(site)

    def site_weight_sq_norm(self, site):
        total = float(np.sum(self.params[f"W{site}"] ** 2))
        if site == self.n_layers - 1 and self.config.aleatoric_head:
            total += float(np.sum(self.params["Ws"] ** 2))
        return total

    def _dropout(self, h, site, mode, rng):
        """Apply site ``site``'s dropout; returns (output, tape entry)."""
        if mode is Mode.DETERMINISTIC:
            return h, None
        if self.config.dropout_mode == BERNOULLI:
            keep = self._keep_default(site)
            if keep >= 1.0:
                return h, None
            scale = (rng.random(h.shape) < keep) / keep
            return h * scale, ("bern", scale)
        p = self.drop_prob(site)
        u = np.clip(rng.random(h.shape), _U_EPS, 1.0 - _U_EPS)
        zt = sigmoid((_logit(p) + np.log(u) - np.log1p(-u)) / self.config.temperature)
        factor = (1.0 - zt) / (1.0 - p)
        return h * factor, ("conc", factor, zt, p)

    # -- forward / backward --------------------------------------------------

    def forward(self, X, mode=Mode.DETERMINISTIC, rng=None, record=False):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        if X.shape[1] != self.config.input_dim:
            raise DimensionMismatch(f"expected {self.config.input_dim} features, got {X.shape[1]}")
        if mode is not Mode.DETERMINISTIC and rng is None:
            raise ConfigError(f"{mode.value} forward needs an rng")
        tape = []
        h = X
        s = None
        for i in range(self.n_layers):
            hd, drop = self._dropout(h, i, mode, rng)
            z = hd @ self.params[f"W{i}"] + self.params[f"b{i}"]
            last = i == self.n_layers - 1
            if last and self.config.aleatoric_head:
                s = (hd @ self.params["Ws"] + self.params["bs"])[:, 0]
            tape.append((h, hd, drop, z))
            h = z if last else np.maximum(z, 0.0)
        self._tape = tape if record else None
        return ModelOutput(logits=h, log_aleatoric=s)

    def backward(self, dlogits, dlog_aleatoric=None):
        """Gradients of a scalar loss given its gradient w.r.t. the recorded outputs."""
        if self._tape is None:
            raise GraphNotRecorded("call forward(..., record=True) before backward")
        grads = {}
        g = np.asarray(dlogits, dtype=np.float64)
        for i in reversed(range(self.n_layers)):
            h, hd, drop, z = self._tape[i]
            last = i == self.n_layers - 1
            if not last:
                g = g * (z > 0.0)
            grads[f"W{i}"] = hd.T @ g
            grads[f"b{i}"] = g.sum(axis=0)
            ghd = g @ self.params[f"W{i}"].T
            if last and self.config.aleatoric_head:
                gs = np.zeros(hd.shape[0]) if dlog_aleatoric is None else np.asarray(dlog_aleatoric)
                grads["Ws"] = hd.T @ gs[:, None]
                grads["bs"] = np.array([gs.sum()])
                ghd = ghd + gs[:, None] @ self.params["Ws"].T
            if drop is None:
                gh = ghd
                if self.config.dropout_mode == CONCRETE:
                    grads[f"drop_logit{i}"] = np.array(0.0)
            elif drop[0] == "bern":
                gh = ghd * drop[1]
            else:
                _, factor, zt, p = drop
                gh = ghd * factor
                # d factor / d drop_logit = factor * (p - zt / t); pathwise through zt, u held fixed
                dfactor = factor * (p - zt / self.config.temperature)
                grads[f"drop_logit{i}"] = np.array(np.sum(ghd * h * dfactor))
            g = gh
        return grads

    def regularizer(self, N):
        """Sum of per-site KL approximations and their gradients."""
        cfg = self.config
        l2 = cfg.prior_length_scale ** 2
        value = 0.0
        grads = {}
        for i in range(self.n_layers):
            p = self.drop_prob(i)
            K_in = self.params[f"W{i}"].shape[0]
            sq = self.site_weight_sq_norm(i)
            value += concrete_kl(p, sq, K_in, N, cfg.prior_length_scale)
            grads[f"W{i}"] = l2 * (1.0 - p) * self.params[f"W{i}"] / N
            if i == self.n_layers - 1 and cfg.aleatoric_head:
                grads["Ws"] = l2 * (1.0 - p) * self.params["Ws"] / N
            if cfg.dropout_mode == CONCRETE:
                a = float(self.params[f"drop_logit{i}"])
                grads[f"drop_logit{i}"] = np.array((-l2 / 2.0 * sq + K_in * a) * p * (1.0 - p) / N)
        return value, grads


class SGD:
    """SGD with Nesterov momentum and a step schedule dropping 10x at 50% and 75%."""

    def __init__(self, lr=0.1, momentum=0.9, nesterov=True, clip_norm=None):
        self.base_lr = lr
        self.momentum = momentum
        self.nesterov = nesterov
        self.clip_norm = clip_norm
        self.velocity = {}

    def lr_at(self, epoch, total_epochs):
        if epoch >= 0.75 * total_epochs:
            return self.base_lr * 0.01
        if epoch >= 0.5 * total_epochs:
            return self.base_lr * 0.1
        return self.base_lr

    def step(self, params, grads, epoch, total_epochs):
        lr = self.lr_at(epoch, total_epochs)
        for name, g in grads.items():
            if not np.all(np.isfinite(g)):
                raise NonFiniteGradient(f"gradient for {name} is not finite")
        if self.clip_norm is not None:
            norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if norm > self.clip_norm:
                grads = {k: g * (self.clip_norm / norm) for k, g in grads.items()}
        for name, g in grads.items():
            v = self.velocity.get(name)
            v = g.copy() if v is None else self.momentum * v + g
            self.velocity[name] = v
            update = g + self.momentum * v if self.nesterov else v
            params[name] = params[name] - lr * update
        return params

    def state(self):
        return {"lr": self.base_lr, "momentum": self.momentum, "nesterov": self.nesterov,
                "clip_norm": self.clip_norm,
                "velocity": {k: _encode_array(v) for k, v in sorted(self.velocity.items())}}

    @classmethod
    def from_state(cls, state):
        opt = cls(state["lr"], state["momentum"], state["nesterov"], state.get("clip_norm"))
        opt.velocity = {k: _decode_array(v) for k, v in state["velocity"].items()}
        return opt


@dataclass
class TrainConfig:
    epochs: int = 75
    batch_size: int = 32
    lr: float = 0.1
    momentum: float = 0.9
    beta: float = 0.0
    aleatoric_T: int = 1
    class_weights: list | None = None
    clip_norm: float | None = None

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")


class Classifier(Protocol):
    """What self-training needs from a model; any framework can implement it."""

    num_classes: int
    has_aleatoric_head: bool

    def fit(self, X, y, weights, rng): ...

    def forward(self, X, mode=Mode.DETERMINISTIC, rng=None, record=False) -> ModelOutput: ...


class MLPClassifier:
    """Trainable wrapper around :class:`MLP` implementing :class:`Classifier`."""

    def __init__(self, net_config, train_config, init_rng):
        self.net = MLP(net_config, init_rng)
        self.train_config = train_config
        self.optimizer = SGD(train_config.lr, train_config.momentum, nesterov=True,
                             clip_norm=train_config.clip_norm)

    @property
    def num_classes(self):
        return self.net.config.num_classes

    @property
    def has_aleatoric_head(self):
        return self.net.config.aleatoric_head

    def forward(self, X, mode=Mode.DETERMINISTIC, rng=None, record=False):
        return self.net.forward(X, mode, rng, record)

    def loss_and_grads(self, X, y, weights, rng, N):
        """Objective on one batch (plus KL term) and the gradients of every parameter."""
        tc = self.train_config
        out = self.net.forward(X, Mode.TRAIN, rng, record=True)
        w = np.asarray(weights, dtype=np.float64)
        if tc.class_weights is not None:
            w = w * np.asarray(tc.class_weights, dtype=np.float64)[y]
        value, dz, ds = losses.training_objective(
            out.logits, y, w, tc.beta, out.log_aleatoric, tc.aleatoric_T, rng=rng)
        grads = self.net.backward(dz, ds)
        reg, rgrads = self.net.regularizer(N)
        for k, g in rgrads.items():
            grads[k] = grads[k] + g
        return value + reg, grads

    def fit(self, X, y, weights, rng):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        weights = np.asarray(weights, dtype=np.float64)
        tc = self.train_config
        N = len(y)
        history = []
        for epoch in range(tc.epochs):
            order = rng.permutation(N)
            total = 0.0
            for start in range(0, N, tc.batch_size):
                idx = order[start:start + tc.batch_size]
                value, grads = self.loss_and_grads(X[idx], y[idx], weights[idx], rng, N)
                self.optimizer.step(self.net.params, grads, epoch, tc.epochs)
                total += value * len(idx)
            history.append(total / N)
        return history

    def predict_proba(self, X):
        return losses.softmax(self.forward(X, Mode.DETERMINISTIC).logits)


# -- checkpoints ---------------------------------------------------------------

def _encode_array(a):
    a = np.asarray(a, dtype=np.float64)
    return {"shape": list(a.shape), "data": [float(v).hex() for v in a.ravel()]}


def _decode_array(d):
    return np.array([float.fromhex(v) for v in d["data"]], dtype=np.float64).reshape(d["shape"])


def checkpoint_dict(model, rng=None):
    """JSON-ready snapshot of a trained MLPClassifier (floats stored as hex)."""
    return {
        "version": CHECKPOINT_VERSION,
        "network": asdict(model.net.config),
        "train": asdict(model.train_config),
        "params": {k: _encode_array(v) for k, v in sorted(model.net.params.items())},
        "optimizer": model.optimizer.state(),
        "rng_state": rng.bit_generator.state if rng is not None else None,
    }


def save_checkpoint(path, model, rng=None):
    with open(path, "w") as f:
        json.dump(checkpoint_dict(model, rng), f, sort_keys=True)


def load_checkpoint(path):
    """Returns ``(model, rng or None)``."""
    with open(path) as f:
        d = json.load(f)
    if d.get("version") != CHECKPOINT_VERSION:
        raise ConfigError(f"unsupported checkpoint version {d.get('version')}")
    model = MLPClassifier(NetworkConfig(**d["network"]), TrainConfig(**d["train"]),
                          np.random.default_rng(0))
    model.net.params = {k: _decode_array(v) for k, v in d["params"].items()}
    for k, v in model.net.params.items():
        if k.startswith("drop_logit"):
            model.net.params[k] = np.array(float(v))
    model.optimizer = SGD.from_state(d["optimizer"])
    rng = None
    if d["rng_state"] is not None:
        rng = np.random.default_rng()
        rng.bit_generator.state = d["rng_state"]
    return model, rng
