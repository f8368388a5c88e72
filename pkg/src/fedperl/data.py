"""Datasets, non-IID client partitioning, and feature-space augmentations."""

from __future__ import annotations

import csv
import hashlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

from .errors import ConfigError, ShapeError

UNLABELED = -1


def _rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Sample:
    x: np.ndarray
    y: int | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Feature matrix plus labels; ``y == -1`` marks a sample without a label."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.int64)
        if X.ndim != 2 or y.shape != (X.shape[0],):
            raise ShapeError(f"X {X.shape} and y {y.shape} disagree")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    def __len__(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]

    def samples(self) -> Iterator[Sample]:
        for x, y in zip(self.X, self.y):
            yield Sample(x, None if y == UNLABELED else int(y))


@dataclass(frozen=True, eq=False)
class LabeledSet:
    X: np.ndarray
    y: np.ndarray
    index: np.ndarray  # row indices into the source dataset

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class UnlabeledSet:
    """Features only. There is deliberately no label field."""

    X: np.ndarray
    index: np.ndarray

    def __len__(self) -> int:
        return self.X.shape[0]


@dataclass(frozen=True, eq=False)
class ClientShard:
    labeled: LabeledSet
    unlabeled: UnlabeledSet
    validation: LabeledSet
    test: LabeledSet

    @property
    def n_train(self) -> int:
        return len(self.labeled) + len(self.unlabeled)

    def all_indices(self) -> np.ndarray:
        return np.concatenate(
            [self.labeled.index, self.unlabeled.index, self.validation.index, self.test.index]
        )


@dataclass(frozen=True, eq=False)
class PartitionPlan:
    """Per-client class distributions and sizes.

    ``community`` tags each client with a community id (``-1`` for outliers);
    it is bookkeeping for reports and never reaches the training code.
    """

    class_probs: np.ndarray
    sizes: np.ndarray
    kind: str = "explicit"
    community: tuple[int, ...] = field(default=())

    def __post_init__(self):
        probs = np.atleast_2d(np.asarray(self.class_probs, dtype=np.float64))
        sizes = np.asarray(self.sizes, dtype=np.int64).reshape(-1)
        if probs.shape[0] != sizes.shape[0]:
            raise ConfigError(
                f"plan has {probs.shape[0]} class vectors but {sizes.shape[0]} sizes"
            )
        if (probs < 0).any() or not np.allclose(probs.sum(axis=1), 1.0, atol=1e-9):
            raise ConfigError("each client's class probabilities must be >= 0 and sum to 1")
        if (sizes <= 0).any():
            raise ConfigError("client sizes must be positive")
        community = tuple(self.community) or (0,) * sizes.shape[0]
        if len(community) != sizes.shape[0]:
            raise ConfigError("community tags must have one entry per client")
        object.__setattr__(self, "class_probs", probs)
        object.__setattr__(self, "sizes", sizes)
        object.__setattr__(self, "community", community)

    @property
    def n_clients(self) -> int:
        return self.sizes.shape[0]

    @property
    def n_classes(self) -> int:
        return self.class_probs.shape[1]

    @classmethod
    def explicit(cls, class_probs, sizes, community=()) -> "PartitionPlan":
        return cls(class_probs, sizes, "explicit", tuple(community))

    @classmethod
    def uniform(cls, n_clients: int, n_classes: int, sizes) -> "PartitionPlan":
        probs = np.full((n_clients, n_classes), 1.0 / n_classes)
        return cls(probs, np.broadcast_to(np.asarray(sizes), (n_clients,)), "uniform")

    @classmethod
    def two_community(
        cls,
        template_a: Sequence[float],
        template_b: Sequence[float],
        n_a: int,
        n_b: int,
        sizes,
        outliers: Sequence[Sequence[float]] = (),
    ) -> "PartitionPlan":
        """Clients ``0..n_a-1`` follow template A, the next ``n_b`` template B,
        then one client per outlier class vector."""
        a = np.asarray(template_a, dtype=np.float64)
        b = np.asarray(template_b, dtype=np.float64)
        if a.shape != b.shape or np.allclose(a, b):
            raise ConfigError("two_community needs two distinct templates of equal length")
        rows = [a] * n_a + [b] * n_b + [np.asarray(o, dtype=np.float64) for o in outliers]
        community = (0,) * n_a + (1,) * n_b + (-1,) * len(outliers)
        sizes = np.broadcast_to(np.asarray(sizes), (len(rows),))
        return cls(np.vstack(rows), sizes, "two_community", community)

    @classmethod
    def dirichlet(cls, alpha: float, n_clients: int, n_classes: int, sizes, seed) -> "PartitionPlan":
        if alpha <= 0:
            raise ConfigError("dirichlet alpha must be positive")
        probs = _rng(seed).dirichlet(np.full(n_classes, alpha), size=n_clients)
        return cls(probs, np.broadcast_to(np.asarray(sizes), (n_clients,)), "dirichlet")


def make_synthetic(n_classes: int, dim: int, n: int, separation: float, seed) -> Dataset:
    """Gaussian class blobs with unit covariance and balanced labels.

    Class means are random unit directions scaled so that two orthogonal means
    sit ``separation`` apart.
    """
    if n_classes < 2 or dim < 2 or separation <= 0:
        raise ConfigError("need n_classes >= 2, dim >= 2 and separation > 0")
    rng = _rng(seed)
    dirs = rng.normal(size=(n_classes, dim))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    means = dirs * (separation / np.sqrt(2.0))
    y = np.arange(n) % n_classes
    rng.shuffle(y)
    X = means[y] + rng.normal(size=(n, dim))
    return Dataset(X, y)


def load_csv(path) -> Dataset:
    """Read ``f0..f{d-1}`` feature columns and an optional ``label`` column.

    An empty label field marks an unlabeled row (stored as ``-1``).
    """
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        cols = reader.fieldnames or []
        feats = sorted((c for c in cols if c.startswith("f") and c[1:].isdigit()), key=lambda c: int(c[1:]))
        if not feats or feats != [f"f{i}" for i in range(len(feats))]:
            raise ConfigError(f"{path}: expected feature columns f0..f<d-1>, got {cols}")
        xs, ys = [], []
        for row in reader:
            xs.append([float(row[c]) for c in feats])
            lab = (row.get("label") or "").strip()
            ys.append(int(lab) if lab else UNLABELED)
    X = np.asarray(xs, dtype=np.float64).reshape(len(xs), len(feats))
    return Dataset(X, np.asarray(ys, dtype=np.int64))


def largest_remainder(total: int, probs: np.ndarray) -> np.ndarray:
    """Integer counts summing to ``total``; ties go to the lower index."""
    raw = total * np.asarray(probs, dtype=np.float64)
    counts = np.floor(raw).astype(np.int64)
    short = total - counts.sum()
    if short > 0:
        order = np.argsort(-(raw - counts), kind="stable")
        counts[order[:short]] += 1
    return counts


def _split_sizes(n: int, labeled_fraction: float, val_fraction: float, test_fraction: float):
    n_test = int(round(test_fraction * n))
    n_val = int(round(val_fraction * n))
    n_train = n - n_test - n_val
    n_lab = int(round(labeled_fraction * n_train))
    if labeled_fraction > 0 and n_train > 0:
        n_lab = max(n_lab, 1)
    return n_test, n_val, n_train, n_lab


def partition(
    data: Dataset,
    plan: PartitionPlan,
    seed,
    labeled_fraction: float = 0.12,
    val_fraction: float = 0.1,
    test_fraction: float = 0.2,
) -> list[ClientShard]:
    """Split ``data`` into one shard per client following ``plan``.

    Class counts per client are the largest-remainder rounding of
    ``size * class_probs``. Each client's samples are shuffled, then cut into
    test, validation and training parts; the first ``labeled_fraction`` of the
    training part keeps its labels. Random draws never depend on
    ``labeled_fraction``, so re-partitioning with a different fraction keeps the
    same validation/test sets and a nested labeled set. Rows of ``data``
    without a label are dealt round-robin into the clients' unlabeled parts.
    """
    for name, frac in (("labeled_fraction", labeled_fraction), ("val_fraction", val_fraction), ("test_fraction", test_fraction)):
        if not 0.0 <= frac <= 1.0:
            raise ConfigError(f"{name} must lie in [0, 1], got {frac}")
    if val_fraction + test_fraction >= 1.0:
        raise ConfigError("val_fraction + test_fraction must be < 1")
    rng = _rng(seed)
    known = np.flatnonzero(data.y != UNLABELED)
    if known.size and data.y[known].max() >= plan.n_classes:
        raise ConfigError(
            f"dataset has label {int(data.y[known].max())} but plan covers {plan.n_classes} classes"
        )
    pools = []
    for c in range(plan.n_classes):
        idx = known[data.y[known] == c]
        pools.append(rng.permutation(idx))

    counts = np.vstack([largest_remainder(int(s), p) for s, p in zip(plan.sizes, plan.class_probs)])
    demand = counts.sum(axis=0)
    for c in range(plan.n_classes):
        if demand[c] > pools[c].size:
            raise ConfigError(
                f"partition plan infeasible: class {c} needs {int(demand[c])} samples"
                f" but only {pools[c].size} are available"
            )

    spare = rng.permutation(np.flatnonzero(data.y == UNLABELED))
    taken = np.zeros(plan.n_classes, dtype=np.int64)
    shards = []
    for j in range(plan.n_clients):
        parts = []
        for c in range(plan.n_classes):
            k = counts[j, c]
            parts.append(pools[c][taken[c] : taken[c] + k])
            taken[c] += k
        idx = rng.permutation(np.concatenate(parts).astype(np.int64))
        n_test, n_val, _, n_lab = _split_sizes(idx.size, labeled_fraction, val_fraction, test_fraction)
        test_idx = idx[:n_test]
        val_idx = idx[n_test : n_test + n_val]
        train_idx = idx[n_test + n_val :]
        lab_idx = train_idx[:n_lab]
        unl_idx = np.concatenate([train_idx[n_lab:], spare[j :: plan.n_clients]])
        shards.append(
            ClientShard(
                labeled=LabeledSet(data.X[lab_idx], data.y[lab_idx], lab_idx),
                unlabeled=UnlabeledSet(data.X[unl_idx], unl_idx),
                validation=LabeledSet(data.X[val_idx], data.y[val_idx], val_idx),
                test=LabeledSet(data.X[test_idx], data.y[test_idx], test_idx),
            )
        )
    return shards


def class_histogram(shard: ClientShard, n_classes: int) -> np.ndarray:
    """Normalised class histogram over the labeled parts (validation, test, labeled)."""
    ys = np.concatenate([shard.labeled.y, shard.validation.y, shard.test.y])
    h = np.bincount(ys, minlength=n_classes).astype(np.float64)
    return h / max(h.sum(), 1.0)


def dataset_signature(shards: Sequence[ClientShard], data: Dataset) -> str:
    """Short hash identifying the data and its client split."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(data.X).tobytes())
    h.update(np.ascontiguousarray(data.y).tobytes())
    for s in shards:
        for part in (s.labeled.index, s.unlabeled.index, s.validation.index, s.test.index):
            h.update(np.int64(part.size).tobytes())
            h.update(np.ascontiguousarray(part, dtype=np.int64).tobytes())
    return h.hexdigest()[:16]


def soft_augment(x, seed, sigma: float = 0.05) -> np.ndarray:
    """Additive Gaussian noise with standard deviation ``sigma``."""
    x = np.asarray(x, dtype=np.float64)
    if sigma == 0:
        return x.copy()
    return x + _rng(seed).normal(0.0, sigma, size=x.shape)


def hard_augment(x, seed, sigma: float = 0.25, mask_fraction: float = 0.2) -> np.ndarray:
    """Gaussian noise, then zero each coordinate with probability ``mask_fraction``."""
    x = np.asarray(x, dtype=np.float64)
    rng = _rng(seed)
    out = x + rng.normal(0.0, sigma, size=x.shape) if sigma > 0 else x.copy()
    if mask_fraction > 0:
        out[rng.random(size=x.shape) < mask_fraction] = 0.0
    return out
