"""Latent-variable adaptive clustering across two model facets.

Given embeddings of two datasets (each from its own model), cluster both,
carry representative facet-1 samples through the facet-2 model, and
classify by nearest centroid over the union of the two centroid sets.
Centroids that hurt validation accuracy are pruned one at a time.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .errors import DimensionMismatch, EmptyCluster, TooFewPoints

FACET_1, FACET_2 = "FACET_1", "FACET_2"


@dataclass
class EmbeddingSet:
    vectors: np.ndarray
    labels: np.ndarray | None = None
    facet: str = FACET_1

    def __post_init__(self):
        self.vectors = np.atleast_2d(np.asarray(self.vectors, dtype=np.float64))
        if not np.all(np.isfinite(self.vectors)):
            raise ValueError("embedding vectors must be finite")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64)
            if len(self.labels) != len(self.vectors):
                raise ValueError("one label per vector")

    def __len__(self):
        return len(self.vectors)

    @property
    def dim(self):
        return self.vectors.shape[1]


@dataclass
class ClusterSet:
    centroids: np.ndarray
    labels: np.ndarray
    origin: list
    member_counts: np.ndarray
    objective: float = 0.0
    objective_history: list = field(default_factory=list)
    assignments: np.ndarray | None = None

    def __len__(self):
        return len(self.centroids)

    @property
    def dim(self):
        return self.centroids.shape[1]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=np.int64)
        return ClusterSet(self.centroids[idx], self.labels[idx], [self.origin[i] for i in idx],
                          self.member_counts[idx])

    def to_dict(self):
        return {
            "dim": int(self.dim),
            "centroids": self.centroids.tolist(),
            "labels": [int(v) for v in self.labels],
            "origin": list(self.origin),
            "member_counts": [int(v) for v in self.member_counts],
        }

    @classmethod
    def from_dict(cls, d):
        c = np.asarray(d["centroids"], dtype=np.float64).reshape(-1, d["dim"])
        counts = d.get("member_counts") or [0] * len(c)
        return cls(c, np.asarray(d["labels"], dtype=np.int64), list(d["origin"]),
                   np.asarray(counts, dtype=np.int64))


def save_clusters(path, cs):
    with open(path, "w") as f:
        json.dump(cs.to_dict(), f)


def load_clusters(path):
    with open(path) as f:
        return ClusterSet.from_dict(json.load(f))


def mode_label(member_labels):
    """Most frequent class; ties go to the lowest class index."""
    labels = np.asarray(member_labels, dtype=np.int64)
    if labels.size == 0:
        raise EmptyCluster("mode of an empty cluster")
    return int(np.argmax(np.bincount(labels)))


def kmeans_pp_seed(X, k, rng):
    """k-means++ seeding; returns the indices of the chosen rows."""
    X = np.asarray(X, dtype=np.float64)
    n = len(X)
    if n < k or k < 1:
        raise TooFewPoints(f"need at least k={k} points, got {n}")
    chosen = [int(rng.integers(n))]
    d2 = kernels.min_sqdist(X, X[chosen[0]], np.full(n, np.inf))
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            nxt = int(rng.choice(n, p=d2 / total))
        else:
            # every point coincides with a chosen centre
            rest = np.setdiff1d(np.arange(n), chosen)
            nxt = int(rng.choice(rest))
        chosen.append(nxt)
        d2 = kernels.min_sqdist(X, X[nxt], d2)
    return np.asarray(chosen, dtype=np.int64)


def _label_clusters(assign, labels, k):
    out = np.full(k, -1, dtype=np.int64)
    if labels is None:
        return out
    for j in range(k):
        members = labels[assign == j]
        if members.size:
            out[j] = mode_label(members)
    return out


def kmeans(X, k, rng, max_iters=300, tol=0.0, labels=None, origin="C"):
    """Lloyd's algorithm from k-means++ seeds.

    Stops when no centroid moves more than ``tol`` or after ``max_iters``.
    An empty cluster is reseeded at the point farthest from its centroid.
    ``labels`` (optional, per point) give each centroid its mode class.
    """
    X = np.asarray(X, dtype=np.float64)
    C = X[kmeans_pp_seed(X, k, rng)].copy()
    history = []
    for _ in range(max_iters):
        assign, d2 = kernels.assign_nearest(X, C)
        history.append(float(d2.sum()))
        sums, counts = kernels.centroid_sums(X, assign, k)
        new = np.empty_like(C)
        nonempty = counts > 0
        new[nonempty] = sums[nonempty] / counts[nonempty, None]
        if not np.all(nonempty):
            d2 = d2.copy()
            for j in np.flatnonzero(~nonempty):
                far = int(np.argmax(d2))
                new[j] = X[far]
                d2[far] = 0.0
        shift = float(np.sqrt(np.max(np.sum((new - C) ** 2, axis=1))))
        C = new
        if shift <= tol:
            break
    assign, d2 = kernels.assign_nearest(X, C)
    objective = float(d2.sum())
    history.append(objective)
    counts = np.bincount(assign, minlength=k)
    lab = _label_clusters(assign, None if labels is None else np.asarray(labels), k)
    return ClusterSet(C, lab, [origin] * k, counts, objective, history, assign)


def kmeans_best(X, k, rng, n_init=10, **kw):
    """Lowest-objective run among ``n_init`` restarts."""
    best = None
    for _ in range(n_init):
        cs = kmeans(X, k, rng, **kw)
        if best is None or cs.objective < best.objective:
            best = cs
    return best


def nearest_centroid_classify(T, A):
    """Predict each row's class from its nearest centroid; returns (predictions, accuracy or None)."""
    vectors = T.vectors if isinstance(T, EmbeddingSet) else np.atleast_2d(np.asarray(T, dtype=np.float64))
    if vectors.shape[1] != A.dim:
        raise DimensionMismatch(f"vectors have dim {vectors.shape[1]}, centroids {A.dim}")
    idx, _ = kernels.assign_nearest(vectors, A.centroids)
    pred = A.labels[idx]
    truth = T.labels if isinstance(T, EmbeddingSet) else None
    acc = float(np.mean(pred == truth)) if truth is not None and len(truth) else None
    return pred, acc


def nearest_k_indices(X, centre, m):
    d = np.sum((X - centre) ** 2, axis=1)
    return np.argsort(d, kind="stable")[:m]


def adapt(D1, D2, embed2, k, rng, raw1=None, per_centroid=1, n_init=1, max_iters=300):
    """Build the augmented centroid set ``C ∪ Z``.

    ``C`` clusters the facet-2 embeddings ``D2``. ``U`` clusters the facet-1
    embeddings ``D1``; the ``per_centroid`` nearest D1 rows to each ``U``
    centroid form ``S``, which ``embed2`` maps into facet-2 space (it receives
    ``raw1[S]`` when ``raw1`` is given, otherwise the row indices). ``Z``
    clusters those facet-2 vectors, labelled by the S rows' classes.
    """
    if D1.labels is None or D2.labels is None:
        raise ValueError("both embedding sets need labels")
    C = kmeans_best(D2.vectors, k, rng, n_init=n_init, labels=D2.labels, origin="C", max_iters=max_iters)
    U = kmeans_best(D1.vectors, k, rng, n_init=n_init, labels=D1.labels, origin="U", max_iters=max_iters)
    chosen = []
    for centre in U.centroids:
        for i in nearest_k_indices(D1.vectors, centre, per_centroid):
            if int(i) not in chosen:
                chosen.append(int(i))
    S = np.asarray(chosen, dtype=np.int64)
    Z_vectors = np.atleast_2d(np.asarray(embed2(raw1[S] if raw1 is not None else S), dtype=np.float64))
    if Z_vectors.shape[1] != C.dim:
        raise DimensionMismatch("embed2 output dimension differs from D2")
    Z = kmeans_best(Z_vectors, min(k, len(S)), rng, n_init=n_init, labels=D1.labels[S], origin="Z",
                    max_iters=max_iters)
    A = ClusterSet(
        np.concatenate([C.centroids, Z.centroids]),
        np.concatenate([C.labels, Z.labels]),
        C.origin + Z.origin,
        np.concatenate([C.member_counts, Z.member_counts]),
    )
    return A, {"C": C, "U": U, "S": S, "Z": Z}


def centroid_scores(A, validation):
    """Per-centroid accuracy on the validation points it claims, and how many it claims."""
    idx, _ = kernels.assign_nearest(validation.vectors, A.centroids)
    correct = A.labels[idx] == validation.labels
    counts = np.bincount(idx, minlength=len(A))
    hits = np.bincount(idx, weights=correct.astype(np.float64), minlength=len(A))
    # a centroid that claims nothing has no evidence against it
    scores = np.divide(hits, counts, out=np.ones(len(A)), where=counts > 0)
    return scores, counts


def prune(A, validation):
    """Greedily drop the worst centroid while validation accuracy strictly improves."""
    if validation.labels is None:
        raise ValueError("pruning needs labeled validation vectors")
    best = A
    _, best_acc = nearest_centroid_classify(validation, A)
    while len(best) >= 2:
        scores, counts = centroid_scores(best, validation)
        order = np.lexsort((np.arange(len(best)), counts, scores))
        worst = int(order[0])
        candidate = best.subset([j for j in range(len(best)) if j != worst])
        _, acc = nearest_centroid_classify(validation, candidate)
        if acc > best_acc:
            best, best_acc = candidate, acc
        else:
            break
    return best
