"""Training objectives over softmax classifiers (natural logs throughout).

Scalar helpers (``nll``, ``entropy``, ...) take a single logits vector; the
``*_grad`` functions operate on (M, K) batches and also return gradients
with respect to the logits (and the log aleatoric variance), which is what
the network's backward pass consumes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ClassOutOfRange, EmptyClass, NonPositiveWeight, NotNormalized


@dataclass
class LossConfig:
    beta: float = 0.0
    class_weights: np.ndarray | None = None
    aleatoric_T: int = 1


def log_softmax(z):
    z = np.asarray(z, dtype=np.float64)
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z):
    return np.exp(log_softmax(z))


def _check_class(y, K):
    y = np.asarray(y)
    if np.any((y < 0) | (y >= K)):
        raise ClassOutOfRange(f"class index outside 0..{K - 1}")


def _entropy_rows(p):
    with np.errstate(divide="ignore", invalid="ignore"):
        return -np.where(p > 0.0, p * np.log(p), 0.0).sum(axis=-1)


def nll(logits, y):
    """Softmax negative log-likelihood of class ``y``."""
    logits = np.asarray(logits, dtype=np.float64)
    _check_class(y, logits.shape[-1])
    return float(-log_softmax(logits)[int(y)])


def entropy(probabilities):
    """Shannon entropy in nats, with 0 log 0 taken as 0."""
    p = np.asarray(probabilities, dtype=np.float64)
    if np.any(p < 0.0) or abs(p.sum() - 1.0) > 1e-9:
        raise NotNormalized("probabilities must be non-negative and sum to 1")
    return float(_entropy_rows(p))


def penalized_nll(logits, y, beta):
    """NLL minus ``beta`` times the entropy of the predicted distribution."""
    value = nll(logits, y)
    if beta == 0:
        return value
    return value - beta * float(_entropy_rows(softmax(logits)))


def weighted_penalized_loss(logits, y, weights, beta):
    """Batch-mean of ``-(w_i log p(y_i|x_i) + beta H_i)``; the entropy term is unweighted."""
    return weighted_penalized_loss_grad(logits, y, weights, beta)[0]


def weighted_penalized_loss_grad(logits, y, weights, beta):
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    M, K = z.shape
    _check_class(y, K)
    if np.any(w < 0) or not np.any(w > 0):
        raise NonPositiveWeight("sample weights must be non-negative with at least one positive")
    logp = log_softmax(z)
    p = np.exp(logp)
    rows = np.arange(M)
    ll = logp[rows, y]
    H = _entropy_rows(p)
    value = -float(np.sum(w * ll + beta * H)) / M
    grad = p * w[:, None]
    grad[rows, y] -= w
    if beta:
        plogp = np.where(p > 0.0, p * logp, 0.0)
        grad += beta * (plogp + p * H[:, None])
    return value, grad / M


def class_weights(counts):
    """Per-class weights ``max(counts) / counts``."""
    counts = np.asarray(counts, dtype=np.float64)
    if np.any(counts < 1):
        raise EmptyClass("every class needs at least one sample")
    return counts.max() / counts


def class_weighted_ce(logits, y, lambdas):
    """Batch-mean cross entropy with each sample scaled by its class weight."""
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    lambdas = np.asarray(lambdas, dtype=np.float64)
    _check_class(y, len(lambdas))
    return weighted_penalized_loss(logits, y, lambdas[y], 0.0)


def _logsumexp(a, axis):
    m = a.max(axis=axis, keepdims=True)
    return (m + np.log(np.exp(a - m).sum(axis=axis, keepdims=True))).squeeze(axis)


def aleatoric_mc_nll(logits, log_aleatoric, y, T, rng=None, eps=None):
    """``-log mean_t softmax(z + eps_t * exp(s))_y`` for one sample.

    ``eps`` (shape (T, K)) overrides the standard normal draws from ``rng``.
    """
    z = np.asarray(logits, dtype=np.float64)[None, :]
    s = np.asarray([float(log_aleatoric)])
    if eps is not None:
        eps = np.asarray(eps, dtype=np.float64).reshape(T, 1, -1)
    value, _, _ = aleatoric_mc_nll_grad(z, s, [y], T, rng=rng, eps=eps)
    return value


def aleatoric_mc_nll_grad(logits, log_aleatoric, y, T, rng=None, eps=None, weights=None):
    """Batch-mean Monte Carlo aleatoric NLL and its gradients.

    Returns ``(value, dlogits (M, K), dlog_aleatoric (M,))``. ``weights``
    scales each sample's term.
    """
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    s = np.asarray(log_aleatoric, dtype=np.float64).reshape(-1)
    y = np.asarray(y, dtype=np.int64).reshape(-1)
    M, K = z.shape
    _check_class(y, K)
    w = np.ones(M) if weights is None else np.asarray(weights, dtype=np.float64).reshape(-1)
    if eps is None:
        eps = rng.standard_normal((T, M, K))
    sigma = np.exp(s)
    noise = eps * sigma[None, :, None]
    u = z[None, :, :] + noise
    logq = log_softmax(u)
    rows = np.arange(M)
    a = logq[:, rows, y]  # (T, M) log-probability of the target class per draw
    ll = _logsumexp(a, axis=0) - np.log(T)
    value = -float(np.sum(w * ll)) / M
    tw = np.exp(a - _logsumexp(a, axis=0)[None, :])  # (T, M) posterior draw weights
    q = np.exp(logq)
    resid = q.copy()
    resid[:, rows, y] -= 1.0  # q - onehot(y)
    dz = np.einsum("tm,tmk->mk", tw, resid)
    ds = np.einsum("tm,tmk->m", tw, resid * noise)
    scale = (w / M)
    return value, dz * scale[:, None], ds * scale


def training_objective(logits, y, weights, beta, log_aleatoric=None, T=1, rng=None, eps=None):
    """Weighted penalised loss, using the MC aleatoric likelihood when ``log_aleatoric`` is given.

    Returns ``(value, dlogits, dlog_aleatoric or None)``.
    """
    if log_aleatoric is None:
        value, dz = weighted_penalized_loss_grad(logits, y, weights, beta)
        return value, dz, None
    z = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    w = np.asarray(weights, dtype=np.float64).reshape(-1)
    if np.any(w < 0) or not np.any(w > 0):
        raise NonPositiveWeight("sample weights must be non-negative with at least one positive")
    value, dz, ds = aleatoric_mc_nll_grad(z, log_aleatoric, y, T, rng=rng, eps=eps, weights=w)
    if beta:
        M = z.shape[0]
        logp = log_softmax(z)
        p = np.exp(logp)
        H = _entropy_rows(p)
        value -= beta * float(H.sum()) / M
        plogp = np.where(p > 0.0, p * logp, 0.0)
        dz = dz + beta * (plogp + p * H[:, None]) / M
    return value, dz, ds
