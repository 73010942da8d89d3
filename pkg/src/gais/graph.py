"""Similarity graphs over one chunk of instances."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist


class DistanceMetric(str, enum.Enum):
    MANHATTAN = "manhattan"
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"

    @classmethod
    def parse(cls, value) -> "DistanceMetric":
        return value if isinstance(value, cls) else cls(str(value).lower())


METRIC_ORDER = (DistanceMetric.MANHATTAN, DistanceMetric.EUCLIDEAN, DistanceMetric.COSINE)

_SCIPY_NAME = {DistanceMetric.MANHATTAN: "cityblock", DistanceMetric.EUCLIDEAN: "euclidean"}


def _unit_rows(A: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norms = np.linalg.norm(A, axis=1)
    safe = np.where(norms > 0, norms, 1.0)
    return A / safe[:, None], norms == 0


def _cross_distance(A: np.ndarray, B: np.ndarray, metric: DistanceMetric) -> np.ndarray:
    if metric is DistanceMetric.COSINE:
        # 1 - cos(u, v) == |u/|u| - v/|v||^2 / 2, evaluated pairwise so that
        # any row block reproduces the full matrix bit for bit
        ua, za = _unit_rows(A)
        ub, zb = _unit_rows(B)
        D = np.clip(0.5 * cdist(ua, ub, metric="sqeuclidean"), 0.0, 2.0)
        D[za, :] = 1.0
        D[:, zb] = 1.0
        return D
    return cdist(A, B, metric=_SCIPY_NAME[metric])


def pairwise_distance(X, metric) -> np.ndarray:
    """Full ``m x m`` distance matrix with an exact zero diagonal."""
    X = np.asarray(X, dtype=np.float64)
    metric = DistanceMetric.parse(metric)
    D = _cross_distance(X, X, metric)
    np.fill_diagonal(D, 0.0)
    return D


def to_similarity(D, metric) -> np.ndarray:
    metric = DistanceMetric.parse(metric)
    D = np.asarray(D, dtype=np.float64)
    if metric is DistanceMetric.COSINE:
        S = np.clip(1.0 - D, 0.0, 1.0)
    else:
        S = 1.0 / (1.0 + D)
    if S.ndim == 2 and S.shape[0] == S.shape[1]:
        np.fill_diagonal(S, 1.0)
    return S


@dataclass
class Graph:
    """Undirected graph stored as an upper-triangular edge list.

    Every node carries an implicit self-loop of weight 1, which is not part of
    ``src``/``dst``/``weight``.
    """

    node_count: int
    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray

    @property
    def edge_count(self) -> int:
        return len(self.src)

    @property
    def edges(self) -> list[tuple[int, int, float]]:
        return [(int(i), int(j), float(w)) for i, j, w in zip(self.src, self.dst, self.weight)]

    @cached_property
    def neighborhoods(self) -> "Neighborhoods":
        return Neighborhoods.from_graph(self)

    def permuted(self, perm) -> "Graph":
        """Relabel node ``k`` as ``inverse[k]`` where ``perm`` lists old ids in new order."""
        perm = np.asarray(perm)
        inverse = np.empty_like(perm)
        inverse[perm] = np.arange(len(perm))
        a, b = inverse[self.src], inverse[self.dst]
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        order = np.lexsort((hi, lo))
        return Graph(self.node_count, lo[order], hi[order], self.weight[order])

    def dump(self, path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for i, j, w in zip(self.src, self.dst, self.weight):
                fh.write(f"{int(i)} {int(j)} {float(w)!r}\n")

    @classmethod
    def load(cls, path, node_count: int) -> "Graph":
        rows = [line.split() for line in Path(path).read_text().splitlines() if line.strip()]
        src = np.array([int(r[0]) for r in rows], dtype=np.int64)
        dst = np.array([int(r[1]) for r in rows], dtype=np.int64)
        weight = np.array([float(r[2]) for r in rows])
        return cls(node_count, src, dst, weight)


@dataclass
class Neighborhoods:
    """Directed message list (self-loops included) grouped by receiving node.

    Edge ``e`` sends from ``source[e]`` into ``target[e]``; edges of node ``i``
    occupy ``indptr[i]:indptr[i+1]``.
    """

    target: np.ndarray
    source: np.ndarray
    indptr: np.ndarray

    @classmethod
    def from_graph(cls, graph: Graph) -> "Neighborhoods":
        m = graph.node_count
        loops = np.arange(m, dtype=np.int64)
        target = np.concatenate([loops, graph.src, graph.dst]).astype(np.int64)
        source = np.concatenate([loops, graph.dst, graph.src]).astype(np.int64)
        order = np.lexsort((source, target))
        target, source = target[order], source[order]
        indptr = np.zeros(m + 1, dtype=np.int64)
        np.cumsum(np.bincount(target, minlength=m), out=indptr[1:])
        return cls(target, source, indptr)

    @property
    def starts(self) -> np.ndarray:
        return self.indptr[:-1]


def _row_uniforms(seed, row: int, count: int) -> np.ndarray:
    return np.random.default_rng([int(seed), int(row)]).random(count)


def _threshold_rows(S_block, row0, theta_s, theta_r, seed, rows_src, rows_dst, rows_w):
    m = S_block.shape[1]
    for r in range(S_block.shape[0]):
        i = row0 + r
        tail = S_block[r, i + 1:]
        keep = tail >= theta_s
        if theta_r > 0:
            keep &= _row_uniforms(seed, i, m - i - 1) >= theta_r
        cols = np.nonzero(keep)[0]
        if cols.size:
            rows_src.append(np.full(cols.size, i, dtype=np.int64))
            rows_dst.append(cols + i + 1)
            rows_w.append(tail[cols])


def _assemble(m, rows_src, rows_dst, rows_w) -> Graph:
    if rows_src:
        return Graph(m, np.concatenate(rows_src), np.concatenate(rows_dst), np.concatenate(rows_w))
    empty = np.zeros(0, dtype=np.int64)
    return Graph(m, empty, empty.copy(), np.zeros(0))


def build_graph(S, theta_s: float, theta_r: float, seed: int) -> Graph:
    """Keep pairs with similarity >= ``theta_s``, then drop each survivor with
    probability ``theta_r``.

    The drop decisions for row ``i`` come from a generator seeded with
    ``(seed, i)`` so row blocks can be built independently.
    """
    S = np.asarray(S, dtype=np.float64)
    rows_src, rows_dst, rows_w = [], [], []
    _threshold_rows(S, 0, theta_s, theta_r, seed, rows_src, rows_dst, rows_w)
    return _assemble(S.shape[0], rows_src, rows_dst, rows_w)


def graph_from_features(X, metric, theta_s: float, theta_r: float, seed: int, block: int = 1024) -> Graph:
    """Same result as ``build_graph(to_similarity(pairwise_distance(X)))`` but
    computed in row blocks to bound memory."""
    X = np.asarray(X, dtype=np.float64)
    metric = DistanceMetric.parse(metric)
    m = len(X)
    rows_src, rows_dst, rows_w = [], [], []
    for row0 in range(0, m, block):
        rows = slice(row0, min(row0 + block, m))
        D = _cross_distance(X[rows], X, metric)
        S = to_similarity(D, metric)
        _threshold_rows(S, row0, theta_s, theta_r, seed, rows_src, rows_dst, rows_w)
    return _assemble(m, rows_src, rows_dst, rows_w)
