"""Dataset ingestion, standardisation, splitting and the labeled/unlabeled pools."""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import _random
from .errors import (
    AlreadyLabeled,
    CountMismatch,
    EmptyTrainSplit,
    InsufficientClassCount,
    MagicMismatch,
    MissingColumn,
    NonNumericCell,
    NonPositiveWeight,
    TruncatedFile,
    UnknownId,
)

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801

ABSENT = -1
SEED = "SEED"
PSEUDO = "PSEUDO"


@dataclass
class Sample:
    features: np.ndarray
    label: int | None
    weight: float
    origin: str
    id: int


@dataclass
class RawDataset:
    """Features plus labels as read from disk; ``ABSENT`` (-1) marks a missing label."""

    X: np.ndarray
    y: np.ndarray

    def __len__(self):
        return len(self.y)

    @property
    def num_classes(self):
        labeled = self.y[self.y != ABSENT]
        return int(labeled.max()) + 1 if labeled.size else 0


@dataclass
class Pool:
    """Column-oriented storage for one split."""

    ids: np.ndarray
    X: np.ndarray
    y: np.ndarray
    weight: np.ndarray
    origin: np.ndarray

    @classmethod
    def empty(cls, dim):
        return cls(
            ids=np.empty(0, dtype=np.int64),
            X=np.empty((0, dim), dtype=np.float64),
            y=np.empty(0, dtype=np.int64),
            weight=np.empty(0, dtype=np.float64),
            origin=np.empty(0, dtype=object),
        )

    @classmethod
    def build(cls, ids, X, y, origin=SEED):
        n = len(ids)
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            X = X.reshape(n, -1)
        return cls(
            ids=np.asarray(ids, dtype=np.int64),
            X=X,
            y=np.asarray(y, dtype=np.int64),
            weight=np.ones(n, dtype=np.float64),
            origin=np.array([origin] * n, dtype=object),
        )

    def __len__(self):
        return len(self.ids)

    def __iter__(self):
        for i in range(len(self)):
            label = int(self.y[i])
            yield Sample(
                features=self.X[i],
                label=None if label == ABSENT else label,
                weight=float(self.weight[i]),
                origin=str(self.origin[i]),
                id=int(self.ids[i]),
            )

    def take(self, idx):
        return Pool(self.ids[idx], self.X[idx], self.y[idx], self.weight[idx], self.origin[idx])

    def append(self, other):
        return Pool(
            np.concatenate([self.ids, other.ids]),
            np.concatenate([self.X, other.X]),
            np.concatenate([self.y, other.y]),
            np.concatenate([self.weight, other.weight]),
            np.concatenate([self.origin, other.origin]),
        )

    def with_features(self, X):
        return replace(self, X=X)


@dataclass
class DatasetSplit:
    """Train/valid/test splits plus the unlabeled pool.

    Unlabeled samples carry ``ABSENT`` labels. Their true labels are kept in
    ``_ground_truth`` and are only read by :mod:`dbst.metrics`.
    """

    train: Pool
    valid: Pool
    test: Pool
    unlabeled: Pool
    num_classes: int
    feature_dim: int
    _ground_truth: dict = field(default_factory=dict, repr=False)

    @property
    def total(self):
        return len(self.train) + len(self.valid) + len(self.test) + len(self.unlabeled)

    def copy(self):
        return DatasetSplit(
            train=self.train.take(slice(None)),
            valid=self.valid.take(slice(None)),
            test=self.test.take(slice(None)),
            unlabeled=self.unlabeled.take(slice(None)),
            num_classes=self.num_classes,
            feature_dim=self.feature_dim,
            _ground_truth=dict(self._ground_truth),
        )

    def manifest(self, seed=None):
        return {
            "seed": seed,
            "num_classes": self.num_classes,
            "feature_dim": self.feature_dim,
            "train": [int(i) for i in self.train.ids],
            "valid": [int(i) for i in self.valid.ids],
            "test": [int(i) for i in self.test.ids],
            "unlabeled": [int(i) for i in self.unlabeled.ids],
            "pseudo_labels": {
                str(int(i)): [int(lbl), float(w)]
                for i, lbl, w, o in zip(self.train.ids, self.train.y, self.train.weight, self.train.origin)
                if o == PSEUDO
            },
        }


# ----------------------------------------------------------------------------
# ingestion

def _read_exact(f, n, path):
    data = f.read(n)
    if len(data) != n:
        raise TruncatedFile(f"{path}: expected {n} bytes, got {len(data)}")
    return data


def load_idx(images_path, labels_path):
    """Read an IDX image/label file pair (MNIST layout) into a RawDataset."""
    with open(images_path, "rb") as f:
        magic, count = struct.unpack(">II", _read_exact(f, 8, images_path))
        if magic != IDX_IMAGE_MAGIC:
            raise MagicMismatch(f"{images_path}: magic 0x{magic:08x} != 0x{IDX_IMAGE_MAGIC:08x}")
        rows, cols = struct.unpack(">II", _read_exact(f, 8, images_path))
        pixels = _read_exact(f, count * rows * cols, images_path)
    with open(labels_path, "rb") as f:
        magic, n_labels = struct.unpack(">II", _read_exact(f, 8, labels_path))
        if magic != IDX_LABEL_MAGIC:
            raise MagicMismatch(f"{labels_path}: magic 0x{magic:08x} != 0x{IDX_LABEL_MAGIC:08x}")
        labels = _read_exact(f, n_labels, labels_path)
    if n_labels != count:
        raise CountMismatch(f"{count} images but {n_labels} labels")
    X = np.frombuffer(pixels, dtype=np.uint8).reshape(count, rows * cols).astype(np.float64)
    y = np.frombuffer(labels, dtype=np.uint8).astype(np.int64)
    return RawDataset(X, y)


def write_idx(images_path, labels_path, images, labels):
    """Write uint8 images (n, rows, cols) and labels in IDX format."""
    images = np.asarray(images, dtype=np.uint8)
    labels = np.asarray(labels, dtype=np.uint8)
    n, rows, cols = images.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGE_MAGIC, n, rows, cols))
        f.write(images.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABEL_MAGIC, len(labels)))
        f.write(labels.tobytes())


def load_csv(path, label_column="label"):
    """Read a headered CSV; an empty label cell marks an unlabeled row."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise MissingColumn(f"{path}: empty file, no header") from None
        if label_column not in header:
            raise MissingColumn(f"{path}: no column {label_column!r}")
        li = header.index(label_column)
        rows, labels = [], []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            cell = row[li].strip()
            try:
                labels.append(int(float(cell)) if cell else ABSENT)
                rows.append([float(v) for j, v in enumerate(row) if j != li])
            except ValueError:
                raise NonNumericCell(f"{path}:{lineno}: non-numeric cell") from None
    dim = len(header) - 1
    X = np.asarray(rows, dtype=np.float64).reshape(len(rows), dim)
    return RawDataset(X, np.asarray(labels, dtype=np.int64))


def write_csv(path, X, y, label_column="label"):
    X = np.asarray(X)
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow([f"x{j}" for j in range(X.shape[1])] + [label_column])
        for row, lbl in zip(X, y):
            w.writerow([repr(float(v)) for v in row] + ["" if lbl == ABSENT else int(lbl)])


# ----------------------------------------------------------------------------
# splitting and standardisation

def split(dataset, seed, per_class_train, per_class_valid, test=None):
    """Class-stratified split of ``dataset`` into train/valid/unlabeled.

    Rows left over after the per-class quotas, and rows with no label, go to
    the unlabeled pool. ``test`` (a RawDataset) is passed through untouched
    with ids offset past the training source.
    """
    y = dataset.y
    K = max(dataset.num_classes, test.num_classes if test is not None else 0)
    rng = _random.stream(seed, "split")
    train_idx, valid_idx = [], []
    need = per_class_train + per_class_valid
    for c in range(K):
        members = np.flatnonzero(y == c)
        if len(members) < need:
            raise InsufficientClassCount(f"class {c}: {len(members)} labeled samples < {need}")
        order = rng.permutation(members)
        train_idx.append(order[:per_class_train])
        valid_idx.append(order[per_class_train:need])
    train_idx = np.sort(np.concatenate(train_idx)) if train_idx else np.empty(0, np.int64)
    valid_idx = np.sort(np.concatenate(valid_idx)) if valid_idx else np.empty(0, np.int64)
    rest = np.ones(len(y), dtype=bool)
    rest[train_idx] = False
    rest[valid_idx] = False
    unl_idx = np.flatnonzero(rest)

    dim = dataset.X.shape[1]
    ids = np.arange(len(y), dtype=np.int64)
    train = Pool.build(ids[train_idx], dataset.X[train_idx], y[train_idx])
    valid = Pool.build(ids[valid_idx], dataset.X[valid_idx], y[valid_idx])
    unlabeled = Pool.build(ids[unl_idx], dataset.X[unl_idx], np.full(len(unl_idx), ABSENT))
    truth = {int(i): int(y[i]) for i in unl_idx}
    if test is not None:
        test_pool = Pool.build(np.arange(len(test), dtype=np.int64) + len(y), test.X, test.y)
    else:
        test_pool = Pool.empty(dim)
    return DatasetSplit(train, valid, test_pool, unlabeled, K, dim, truth)


def from_manifest(dataset, manifest, test=None):
    """Rebuild a DatasetSplit from a manifest written by :meth:`DatasetSplit.manifest`."""
    y = dataset.y
    pseudo = manifest.get("pseudo_labels") or {}

    def pool(key):
        idx = np.asarray([i for i in manifest[key] if str(i) not in pseudo], dtype=np.int64)
        return Pool.build(idx, dataset.X[idx], y[idx])

    train, valid = pool("train"), pool("valid")
    unl_idx = np.asarray(manifest["unlabeled"], dtype=np.int64)
    unlabeled = Pool.build(unl_idx, dataset.X[unl_idx], np.full(len(unl_idx), ABSENT))
    truth = {int(i): int(y[i]) for i in unl_idx}
    for key, (lbl, _w) in pseudo.items():
        truth[int(key)] = int(y[int(key)])
    if pseudo:
        pid = np.array([int(k) for k in pseudo], dtype=np.int64)
        extra = Pool.build(pid, dataset.X[pid], [v[0] for v in pseudo.values()], origin=PSEUDO)
        extra.weight = np.array([v[1] for v in pseudo.values()], dtype=np.float64)
        train = train.append(extra)
    if test is not None:
        test_pool = Pool.build(np.arange(len(test), dtype=np.int64) + len(y), test.X, test.y)
    else:
        test_pool = Pool.empty(dataset.X.shape[1])
    return DatasetSplit(train, valid, test_pool, unlabeled, int(manifest["num_classes"]),
                        int(manifest["feature_dim"]), truth)


def save_manifest(path, split_, seed=None):
    Path(path).write_text(json.dumps(split_.manifest(seed), indent=1, sort_keys=True) + "\n")


def load_manifest(path):
    return json.loads(Path(path).read_text())


def standardize(split_):
    """Standardise every pool with the train split's per-feature mean and population sd.

    Returns ``(new_split, mean, sd)``; zero-variance features keep sd = 1.
    """
    if len(split_.train) == 0:
        raise EmptyTrainSplit("cannot standardise with an empty train split")
    mean = split_.train.X.mean(axis=0)
    sd = split_.train.X.std(axis=0)
    sd = np.where(sd == 0.0, 1.0, sd)

    def tf(pool):
        return pool.with_features((pool.X - mean) / sd)

    out = DatasetSplit(tf(split_.train), tf(split_.valid), tf(split_.test), tf(split_.unlabeled),
                       split_.num_classes, split_.feature_dim, dict(split_._ground_truth))
    return out, mean, sd


# ----------------------------------------------------------------------------
# pool updates

def admit_many(split_, ids, labels, weights):
    """Move unlabeled samples into train as weighted pseudo-labeled samples (in place)."""
    ids = np.asarray(ids, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    weights = np.asarray(weights, dtype=np.float64)
    if ids.size == 0:
        return split_
    if np.any(~(weights > 0)):
        raise NonPositiveWeight("pseudo-label weights must be > 0")
    if len(np.unique(ids)) != len(ids):
        raise AlreadyLabeled("duplicate ids in one admission batch")
    pos = {int(i): j for j, i in enumerate(split_.unlabeled.ids)}
    rows = []
    for i in ids:
        j = pos.get(int(i))
        if j is None:
            for p in (split_.train, split_.valid, split_.test):
                if np.any(p.ids == i):
                    raise AlreadyLabeled(f"sample {int(i)} is already labeled")
            raise UnknownId(f"no sample with id {int(i)}")
        rows.append(j)
    rows = np.asarray(rows, dtype=np.int64)
    moved = split_.unlabeled.take(rows)
    moved.y = labels.copy()
    moved.weight = weights.copy()
    moved.origin = np.array([PSEUDO] * len(rows), dtype=object)
    keep = np.ones(len(split_.unlabeled), dtype=bool)
    keep[rows] = False
    split_.unlabeled = split_.unlabeled.take(keep)
    split_.train = split_.train.append(moved)
    return split_


def admit(split_, sample_id, pseudo_label, weight):
    """Move one unlabeled sample into train with a pseudo-label and weight (in place)."""
    return admit_many(split_, [sample_id], [pseudo_label], [weight])
