"""Synthetic datasets for desk-scale experiments and acceptance runs."""

from __future__ import annotations

import math

import numpy as np

from . import _random
from .cluster import EmbeddingSet, FACET_1, FACET_2
from .data import RawDataset
from .errors import ConfigError


def simplex_centers(classes, separation, dim):
    """Vertices of a regular simplex with pairwise distance ``separation``, centred at 0."""
    if classes < 1:
        raise ConfigError("need at least one class")
    if dim < classes - 1:
        raise ConfigError(f"dim={dim} cannot hold a {classes}-vertex simplex")
    if separation < 0:
        raise ConfigError("separation must be >= 0")
    if classes == 1:
        return np.zeros((1, dim))
    V = np.eye(classes) - 1.0 / classes
    _, _, vt = np.linalg.svd(V)
    coords = V @ vt[: classes - 1].T
    coords *= separation / math.sqrt(2.0)
    out = np.zeros((classes, dim))
    out[:, : classes - 1] = coords
    return out


def blobs(classes, per_class, separation, dim=2, seed=0, stream="blobs"):
    """Unit-variance isotropic Gaussian classes centred on a regular simplex.

    ``stream`` names the random stream, so a held-out set can be drawn from
    the same seed without repeating the training points.
    """
    rng = _random.stream(seed, stream)
    centers = simplex_centers(classes, separation, dim)
    X = np.concatenate([centers[c] + rng.standard_normal((per_class, dim)) for c in range(classes)])
    y = np.repeat(np.arange(classes), per_class)
    order = rng.permutation(len(y))
    return RawDataset(X[order], y[order].astype(np.int64))


def rotation(dim, degrees):
    """Rotate every consecutive coordinate pair (0,1), (2,3), ... by ``degrees``."""
    R = np.eye(dim)
    a = math.radians(degrees)
    c, s = math.cos(a), math.sin(a)
    for i in range(0, dim - 1, 2):
        R[i, i], R[i, i + 1], R[i + 1, i], R[i + 1, i + 1] = c, -s, s, c
    return R


class TwoFacetProblem:
    """Two related domains seen through two embedding models.

    Raw samples of each class are a mixture of ``modes`` Gaussian blobs.
    Domain 1 shifts every blob centre of domain 2 by a random offset of norm
    ``shift``. The facet-1 model embeds raw inputs as-is; the facet-2 model
    applies a rotation by ``angle`` degrees plus a constant offset.
    """

    def __init__(self, seed, classes=2, modes=3, dim=8, spread=1.0, shift=2.5, noise=0.8,
                 angle=30.0, offset=1.5, n_train=300, n_valid=150, n_test=300):
        rng = _random.stream(seed, "two_facet")
        self.classes, self.modes, self.dim = classes, modes, dim
        self.noise = noise
        self.centres2 = rng.normal(0.0, spread, size=(classes, modes, dim))
        direction = rng.standard_normal((classes, modes, dim))
        direction /= np.linalg.norm(direction, axis=-1, keepdims=True)
        self.centres1 = self.centres2 + shift * direction
        self.R = rotation(dim, angle)
        self.offset = np.full(dim, offset / math.sqrt(dim))
        self.rng = rng
        self.raw1_train, self.y1_train = self._draw(self.centres1, n_train)
        self.raw1_valid, self.y1_valid = self._draw(self.centres1, n_valid)
        self.raw1_test, self.y1_test = self._draw(self.centres1, n_test)
        self.raw2_train, self.y2_train = self._draw(self.centres2, n_train)
        self.raw2_test, self.y2_test = self._draw(self.centres2, n_test)

    def _draw(self, centres, per_class):
        X, y = [], []
        for c in range(self.classes):
            mode = self.rng.integers(self.modes, size=per_class)
            X.append(centres[c, mode] + self.noise * self.rng.standard_normal((per_class, self.dim)))
            y.append(np.full(per_class, c))
        return np.concatenate(X), np.concatenate(y).astype(np.int64)

    def embed1(self, raw):
        return np.asarray(raw, dtype=np.float64).copy()

    def embed2(self, raw):
        return np.asarray(raw, dtype=np.float64) @ self.R.T + self.offset

    @property
    def D1(self):
        return EmbeddingSet(self.embed1(self.raw1_train), self.y1_train, FACET_1)

    @property
    def D2(self):
        return EmbeddingSet(self.embed2(self.raw2_train), self.y2_train, FACET_2)

    @property
    def T1(self):
        return EmbeddingSet(self.embed2(self.raw1_test), self.y1_test, FACET_2)

    @property
    def V1(self):
        return EmbeddingSet(self.embed2(self.raw1_valid), self.y1_valid, FACET_2)

    @property
    def T2(self):
        return EmbeddingSet(self.embed2(self.raw2_test), self.y2_test, FACET_2)
