"""Pure numpy implementations of the hot kernels.

Every function here has a twin in ``_ckernels.pyx`` with the same signature
and the same results up to floating-point summation order.
"""

import numpy as np

_CHUNK = 4096


def kwon_terms(probs):
    """Multinomial-variance decomposition for a (T, n, K) stack of softmax samples.

    Returns ``(aleatoric, epistemic)``, each of shape (n,).
    """
    probs = np.asarray(probs, dtype=np.float64)
    aleatoric = np.mean(np.sum(probs * (1.0 - probs), axis=-1), axis=0)
    centred = probs - probs.mean(axis=0, keepdims=True)
    epistemic = np.mean(np.sum(centred * centred, axis=-1), axis=0)
    return aleatoric, epistemic


def kendall_gal_terms(probs, log_aleatoric):
    probs = np.asarray(probs, dtype=np.float64)
    aleatoric = np.mean(np.exp(np.asarray(log_aleatoric, dtype=np.float64)), axis=0)
    mean = probs.mean(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(mean > 0.0, mean * np.log(mean), 0.0)
    return aleatoric, -terms.sum(axis=-1)


def assign_nearest(X, C):
    """Index of and squared distance to the nearest row of ``C`` for each row of ``X``.

    Ties resolve to the lowest centroid index.
    """
    X = np.asarray(X, dtype=np.float64)
    C = np.asarray(C, dtype=np.float64)
    n = X.shape[0]
    labels = np.empty(n, dtype=np.int64)
    dist = np.empty(n, dtype=np.float64)
    step = max(1, _CHUNK // max(1, C.shape[0]))
    for start in range(0, n, step):
        block = X[start:start + step]
        diff = block[:, None, :] - C[None, :, :]
        d2 = np.einsum("ijk,ijk->ij", diff, diff)
        idx = np.argmin(d2, axis=1)
        labels[start:start + step] = idx
        dist[start:start + step] = d2[np.arange(len(block)), idx]
    return labels, dist


def min_sqdist(X, c, current):
    """Elementwise minimum of ``current`` and the squared distance from each row of X to c."""
    diff = np.asarray(X, dtype=np.float64) - np.asarray(c, dtype=np.float64)
    return np.minimum(current, np.einsum("ij,ij->i", diff, diff))


def centroid_sums(X, labels, k):
    X = np.asarray(X, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    sums = np.zeros((k, X.shape[1]), dtype=np.float64)
    np.add.at(sums, labels, X)
    counts = np.bincount(labels, minlength=k).astype(np.int64)
    return sums, counts


def confusion_counts(true, pred, K):
    true = np.asarray(true, dtype=np.int64)
    pred = np.asarray(pred, dtype=np.int64)
    return np.bincount(true * K + pred, minlength=K * K).reshape(K, K).astype(np.int64)
