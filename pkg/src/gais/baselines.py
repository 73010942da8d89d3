"""Classical instance selection baselines: CNN, ENN, LDIS, RMHC and random.

All of them use Euclidean distance on the preprocessed features and return a
``SelectionResult`` whose indices point into the training set.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .dataset import Dataset
from .trainer import SelectionResult


@dataclass(frozen=True)
class BaselineConfig:
    k: int = 3
    subset_fraction: float = 0.1
    iterations: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if not 0 < self.subset_fraction <= 1:
            raise ValueError("subset_fraction must be in (0, 1]")
        if self.iterations < 0:
            raise ValueError("iterations must be >= 0")


def _subset_size(fraction: float, n: int) -> int:
    # guard against 0.1 * 30 == 3.0000000000000004 style rounding
    return min(n, max(1, math.ceil(fraction * n - 1e-9)))


def _timed(method, n, fn):
    t0 = time.perf_counter()
    selected, extras = fn()
    return SelectionResult(method, np.sort(np.asarray(selected, dtype=np.int64)), n,
                           t_is_seconds=time.perf_counter() - t0, extras=extras)


def _nearest_labels(D, labels, k):
    # stable argsort: equal distances go to the lower index
    order = np.argsort(D, axis=1, kind="stable")[:, :k]
    return labels[order]


def cnn_select(train: Dataset, seed: int | None = 0) -> SelectionResult:
    """Hart's condensed nearest neighbour.

    Instances are scanned in a seeded order (``seed=None`` keeps the given
    order).  The store starts with the first instance of each class met in that
    order; passes repeat until one adds nothing.
    """
    X, y = train.features, train.labels
    n = len(y)
    order = np.arange(n) if seed is None else np.random.default_rng(seed).permutation(n)

    def run():
        store = []
        seen = set()
        for i in order:
            if y[i] not in seen:
                seen.add(y[i])
                store.append(i)
        in_store = np.zeros(n, dtype=bool)
        in_store[store] = True
        passes = 0
        changed = True
        while changed:
            changed = False
            passes += 1
            for i in order:
                if in_store[i]:
                    continue
                d = np.sum((X[store] - X[i]) ** 2, axis=1)
                if y[store[int(np.argmin(d))]] != y[i]:
                    store.append(i)
                    in_store[i] = True
                    changed = True
        return store, {"passes": passes}

    return _timed("cnn", n, run)


def enn_select(train: Dataset, k: int = 3, block: int = 2048) -> SelectionResult:
    """Wilson editing: drop every instance whose label is not the strict
    plurality among its k nearest neighbours in the full set."""
    X, y = train.features, train.labels
    n = len(y)
    if n <= k:
        raise ValueError(f"ENN needs more than k={k} instances")
    C = max(train.class_count, int(y.max()) + 1)

    def run():
        keep = np.zeros(n, dtype=bool)
        for start in range(0, n, block):
            rows = np.arange(start, min(start + block, n))
            D = cdist(X[rows], X)
            D[np.arange(len(rows)), rows] = np.inf
            votes = np.zeros((len(rows), C), dtype=np.int64)
            np.add.at(votes, (np.arange(len(rows))[:, None], _nearest_labels(D, y, k)), 1)
            own = votes[np.arange(len(rows)), y[rows]]
            votes[np.arange(len(rows)), y[rows]] = -1
            keep[rows] = own > votes.max(axis=1)
        return np.flatnonzero(keep), {}

    return _timed("enn", n, run)


def local_density(X: np.ndarray) -> np.ndarray:
    """Negative mean distance to the other members of the same partition."""
    if len(X) < 2:
        return np.zeros(len(X))
    D = cdist(X, X)
    return -D.sum(axis=1) / (len(X) - 1)


def ldis_select(train: Dataset, k: int = 3) -> SelectionResult:
    """Local density-based selection: within each class keep the instances at
    least as dense as all of their k nearest same-class neighbours."""
    X, y = train.features, train.labels

    def run():
        kept = []
        for c in np.unique(y):
            members = np.flatnonzero(y == c)
            if len(members) == 1:
                kept.extend(members)
                continue
            Xc = X[members]
            dens = local_density(Xc)
            D = cdist(Xc, Xc)
            np.fill_diagonal(D, np.inf)
            kk = min(k, len(members) - 1)
            neigh = np.argsort(D, axis=1, kind="stable")[:, :kk]
            ok = np.all(dens[:, None] >= dens[neigh], axis=1)
            kept.extend(members[ok])
        return kept, {}

    return _timed("ldis", len(y), run)


def one_nn_accuracy(D: np.ndarray, labels: np.ndarray, subset: np.ndarray) -> float:
    """Accuracy of 1-NN built on ``subset`` over every row of ``D``."""
    nearest = subset[np.argmin(D[:, subset], axis=1)]
    return float(np.mean(labels[nearest] == labels))


def rmhc_select(train: Dataset, subset_fraction: float = 0.1, iterations: int = 1000, seed: int = 0) -> SelectionResult:
    """Random mutation hill climbing over fixed-size subsets scored by 1-NN
    accuracy on the whole training set.  A swap is kept unless it lowers the
    score."""
    X, y = train.features, train.labels
    n = len(y)
    size = _subset_size(subset_fraction, n)

    def run():
        rng = np.random.default_rng(seed)
        D = cdist(X, X)
        member = np.zeros(n, dtype=bool)
        subset = rng.choice(n, size=size, replace=False)
        member[subset] = True
        fitness = one_nn_accuracy(D, y, subset)
        trajectory = [fitness]
        for _ in range(iterations):
            outside = np.flatnonzero(~member)
            if outside.size == 0:
                trajectory.append(fitness)
                continue
            pos = int(rng.integers(size))
            incoming = int(outside[rng.integers(outside.size)])
            candidate = subset.copy()
            candidate[pos] = incoming
            score = one_nn_accuracy(D, y, candidate)
            if score >= fitness:
                member[subset[pos]] = False
                member[incoming] = True
                subset, fitness = candidate, score
            trajectory.append(fitness)
        return subset, {"fitness": trajectory}

    return _timed("rmhc", n, run)


def random_select(train: Dataset, ratio: float = 0.1, seed: int = 0) -> SelectionResult:
    n = len(train)
    size = _subset_size(ratio, n)

    def run():
        return np.random.default_rng(seed).choice(n, size=size, replace=False), {}

    return _timed("random", n, run)


def full_select(train: Dataset) -> SelectionResult:
    """Keep everything; reference row for benchmarks."""
    return SelectionResult("full", np.arange(len(train)), len(train))
