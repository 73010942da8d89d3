"""Sequential chunk-wise training of the attention model and confidence-based selection."""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import gat
from .dataset import ChunkSpec, Dataset, make_chunks, shuffle_indices
from .errors import DivergedTraining
from .gat import Adam, GatHyperParams, GatModel
from .graph import Graph, graph_from_features
from .metrics import reduction_rate

logger = logging.getLogger(__name__)


@dataclass
class SelectionResult:
    method: str
    selected_idx: np.ndarray
    n_original: int
    theta_c: float | None = None
    t_is_seconds: float = 0.0
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        self.selected_idx = np.asarray(self.selected_idx, dtype=np.int64)

    @property
    def n_selected(self) -> int:
        return len(self.selected_idx)

    @property
    def reduction_rate(self) -> float:
        return reduction_rate(self.n_selected, self.n_original)


@dataclass
class TrainReport:
    chunk_losses: list[list[float]] = field(default_factory=list)
    epochs_run: int = 0
    graph_seconds: float = 0.0
    train_seconds: float = 0.0
    edge_counts: list[int] = field(default_factory=list)


def _graph_seed(seed: int, ordinal: int) -> int:
    return int(np.random.SeedSequence([seed, 2, ordinal]).generate_state(1)[0])


def _chunk_plan(n: int, hp: GatHyperParams):
    order = shuffle_indices(n, hp.seed)
    chunks = make_chunks(n, ChunkSpec(hp.window, hp.overlap))
    return [(c.ordinal, order[c.member_idx]) for c in chunks]


def chunk_graph(features: np.ndarray, ordinal: int, hp: GatHyperParams) -> Graph:
    return graph_from_features(features, hp.metric, hp.theta_s, hp.theta_r, _graph_seed(hp.seed, ordinal))


def train_sequential(train: Dataset, hp: GatHyperParams) -> tuple[GatModel, TrainReport]:
    """Train one model across all chunks in order, carrying parameters and
    optimizer state from chunk to chunk.

    Confidence weights start at 1 for the first epoch of every chunk and are
    then refreshed each epoch from the eval-mode predictions of the current
    parameters.
    """
    if len(train) == 0:
        raise ValueError("training set is empty")
    init_rng = np.random.default_rng([hp.seed, 0])
    drop_rng = np.random.default_rng([hp.seed, 1])
    model = GatModel.glorot(train.n_features, hp.hidden, hp.heads_in, hp.heads_out, train.class_count, init_rng)
    params = model.params()
    opt = Adam(params, lr=hp.learning_rate, weight_decay=hp.weight_decay)
    report = TrainReport()

    for ordinal, members in _chunk_plan(len(train), hp):
        X, y = train.features[members], train.labels[members]
        t0 = time.perf_counter()
        graph = chunk_graph(X, ordinal, hp)
        nb = graph.neighborhoods
        report.graph_seconds += time.perf_counter() - t0
        report.edge_counts.append(graph.edge_count)

        t0 = time.perf_counter()
        losses = []
        weights = np.ones(len(y))
        for epoch in range(hp.epochs):
            if hp.dropout == 0:
                probs, caches = gat._forward(X, nb, model, 0.0, None)
                if epoch:
                    weights = gat.confidence_scores(probs)
            else:
                if epoch:
                    weights = gat.confidence_scores(gat.model_forward(X, nb, model))
                probs, caches = gat._forward(X, nb, model, hp.dropout, drop_rng)
            loss, grads = gat._backward(model, probs, caches, y, weights)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads.values()):
                raise DivergedTraining(ordinal)
            losses.append(loss)
            opt.step(params, grads)
        report.train_seconds += time.perf_counter() - t0
        report.chunk_losses.append(losses)
        report.epochs_run += hp.epochs
        logger.debug("chunk %d: %d nodes, %d edges, loss %.4f -> %.4f",
                     ordinal, len(y), graph.edge_count, losses[0], losses[-1])
    return model, report


def instance_confidence(model: GatModel, train: Dataset, hp: GatHyperParams) -> np.ndarray:
    """Eval-mode confidence per training instance, maximised over the chunks
    that contain it."""
    best = np.full(len(train), -np.inf)
    for ordinal, members in _chunk_plan(len(train), hp):
        X = train.features[members]
        graph = chunk_graph(X, ordinal, hp)
        scores = gat.confidence_scores(gat.model_forward(X, graph, model))
        np.maximum.at(best, members, scores)
    return best


def threshold_scores(scores, theta_c: float) -> np.ndarray:
    return np.flatnonzero(np.asarray(scores) >= theta_c)


def select_instances(model: GatModel, train: Dataset, hp: GatHyperParams, elapsed: float = 0.0) -> SelectionResult:
    """Keep every training instance whose confidence reaches ``hp.theta_c``.

    ``elapsed`` is added to the measured time so callers can fold in the
    preprocessing and training time.
    """
    t0 = time.perf_counter()
    scores = instance_confidence(model, train, hp)
    selected = threshold_scores(scores, hp.theta_c)
    return SelectionResult(
        method="gais",
        selected_idx=selected,
        n_original=len(train),
        theta_c=hp.theta_c,
        t_is_seconds=elapsed + time.perf_counter() - t0,
        extras={"scores": scores},
    )


def gais_select(train: Dataset, hp: GatHyperParams) -> tuple[SelectionResult, GatModel, TrainReport]:
    t0 = time.perf_counter()
    model, report = train_sequential(train, hp)
    result = select_instances(model, train, hp, elapsed=time.perf_counter() - t0)
    result.extras["chunk_losses"] = report.chunk_losses
    return result, model, report
