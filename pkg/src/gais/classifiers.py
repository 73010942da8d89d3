"""Downstream classifiers used to score selected subsets."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .errors import EmptyClass, ShapeError, TooFewInstances

VARIANCE_FLOOR = 1e-9


@dataclass(frozen=True)
class ClassifierKind:
    name: str = "knn"
    k: int = 3
    lr: float = 0.1
    epochs: int = 500
    l2: float = 1e-4

    def __post_init__(self):
        if self.name not in ("knn", "gaussian_nb", "logistic_regression"):
            raise ValueError(f"unknown classifier {self.name!r}")
        if self.k < 1 or self.lr <= 0 or self.epochs < 1 or self.l2 < 0:
            raise ValueError("need k >= 1, lr > 0, epochs >= 1, l2 >= 0")

    @classmethod
    def parse(cls, spec: str) -> "ClassifierKind":
        """``knn``, ``knn:5``, ``gaussian_nb``/``nb``, ``logistic_regression``/``lr``."""
        name, _, arg = spec.partition(":")
        name = {"nb": "gaussian_nb", "lr": "logistic_regression", "logistic": "logistic_regression"}.get(name, name)
        if name == "knn" and arg:
            return cls(name, k=int(arg))
        return cls(name)


DEFAULT_CLASSIFIER = ClassifierKind()


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ShapeError("features must be a 2-D matrix")
    return X


class KNNClassifier:
    def __init__(self, X, y, n_classes, k):
        self.X, self.y, self.n_classes, self.k = X, y, n_classes, k

    def predict(self, X, block: int = 2048) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.X.shape[1]:
            raise ShapeError(f"expected {self.X.shape[1]} features, got {X.shape[1]}")
        out = np.empty(len(X), dtype=np.int64)
        for start in range(0, len(X), block):
            D = cdist(X[start:start + block], self.X)
            # stable sort: equal distances resolve to the lower training index
            nearest = np.argsort(D, axis=1, kind="stable")[:, :self.k]
            votes = np.zeros((len(D), self.n_classes), dtype=np.int64)
            np.add.at(votes, (np.arange(len(D))[:, None], self.y[nearest]), 1)
            out[start:start + block] = votes.argmax(axis=1)
        return out


class GaussianNB:
    def __init__(self, X, y, n_classes):
        self.n_classes = n_classes
        self.means = np.stack([X[y == c].mean(axis=0) for c in range(n_classes)])
        self.vars = np.stack([np.maximum(X[y == c].var(axis=0), VARIANCE_FLOOR) for c in range(n_classes)])
        self.log_priors = np.log(np.bincount(y, minlength=n_classes) / len(y))

    def log_joint(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.means.shape[1]:
            raise ShapeError(f"expected {self.means.shape[1]} features, got {X.shape[1]}")
        diff = X[:, None, :] - self.means[None]
        ll = -0.5 * (np.log(2 * np.pi * self.vars)[None] + diff ** 2 / self.vars[None]).sum(axis=2)
        return ll + self.log_priors

    def predict(self, X) -> np.ndarray:
        return self.log_joint(X).argmax(axis=1)


class LogisticRegression:
    """One-vs-rest logistic regression by full-batch gradient descent."""

    def __init__(self, X, y, n_classes, lr, epochs, l2):
        n, p = X.shape
        self.weights = np.zeros((n_classes, p))
        self.bias = np.zeros(n_classes)
        targets = (y[:, None] == np.arange(n_classes)[None]).astype(np.float64)
        self.losses = []
        for _ in range(epochs):
            logits = X @ self.weights.T + self.bias
            probs = 1.0 / (1.0 + np.exp(-logits))
            eps = 1e-12
            bce = -(targets * np.log(probs + eps) + (1 - targets) * np.log(1 - probs + eps)).mean(axis=0)
            self.losses.append(float(bce.sum() + 0.5 * l2 * np.sum(self.weights ** 2)))
            err = probs - targets
            self.weights -= lr * (err.T @ X / n + l2 * self.weights)
            self.bias -= lr * err.mean(axis=0)

    def scores(self, X) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.weights.shape[1]:
            raise ShapeError(f"expected {self.weights.shape[1]} features, got {X.shape[1]}")
        return X @ self.weights.T + self.bias

    def predict(self, X) -> np.ndarray:
        return self.scores(X).argmax(axis=1)


def fit(kind: ClassifierKind, X, y, n_classes: int | None = None):
    X = _as_matrix(X)
    y = np.asarray(y, dtype=np.int64)
    if len(X) != len(y):
        raise ShapeError("features and labels differ in length")
    if len(y) == 0:
        raise EmptyClass("cannot fit on an empty training set")
    n_classes = n_classes or int(y.max()) + 1
    if kind.name == "knn":
        if len(y) < kind.k:
            raise TooFewInstances(f"knn with k={kind.k} needs at least {kind.k} instances, got {len(y)}")
        return KNNClassifier(X, y, n_classes, kind.k)
    counts = np.bincount(y, minlength=n_classes)
    if np.any(counts == 0):
        raise EmptyClass(f"classes {np.flatnonzero(counts == 0).tolist()} have no training instances")
    if kind.name == "gaussian_nb":
        return GaussianNB(X, y, n_classes)
    return LogisticRegression(X, y, n_classes, kind.lr, kind.epochs, kind.l2)


def predict(model, X) -> np.ndarray:
    return model.predict(X)
