"""Tabular data loading, preprocessing, splitting, chunking and synthetic generators."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import (
    DataError,
    EmptyTable,
    InvalidOverlap,
    MissingTarget,
    RaggedRows,
    TooFewInstances,
    UnseenCategory,
)

logger = logging.getLogger(__name__)

NUMERIC = "numeric"
CATEGORICAL = "categorical"


def _is_number(value: str) -> bool:
    try:
        float(value)
    except ValueError:
        return False
    return True


@dataclass
class RawTable:
    """Rows of strings as read from disk, before any encoding."""

    rows: list[list[str]]
    columns: list[str]
    target_column: str
    column_kinds: dict[str, str]

    def __post_init__(self):
        if self.target_column not in self.columns:
            raise MissingTarget(f"target column {self.target_column!r} not in header")
        width = len(self.columns)
        for k, row in enumerate(self.rows):
            if len(row) != width:
                raise RaggedRows(f"row {k} has {len(row)} values, header has {width}")
        t = self.columns.index(self.target_column)
        if len({row[t] for row in self.rows}) < 2:
            raise DataError("target column needs at least 2 distinct values")

    @property
    def feature_columns(self) -> list[str]:
        return [c for c in self.columns if c != self.target_column]

    def column(self, name: str) -> list[str]:
        k = self.columns.index(name)
        return [row[k] for row in self.rows]

    def __len__(self):
        return len(self.rows)


def infer_kinds(columns: Sequence[str], rows: Sequence[Sequence[str]]) -> dict[str, str]:
    kinds = {}
    for k, name in enumerate(columns):
        values = [row[k] for row in rows if row[k] != ""]
        numeric = bool(values) and all(_is_number(v) for v in values)
        kinds[name] = NUMERIC if numeric else CATEGORICAL
    return kinds


def load_csv(path, target: str, kinds: dict[str, str] | None = None) -> RawTable:
    """Read a headed, comma-separated UTF-8 file.

    Column kinds are inferred (numeric when every non-empty value parses as a
    real number) unless overridden through ``kinds``.  Rows whose target is
    empty are dropped.
    """
    path = Path(path)
    if not path.is_file():
        raise DataError(f"no such file: {path}")
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise EmptyTable(f"{path} is empty") from None
        rows = [row for row in reader if row]
    header = [h.strip() for h in header]
    if target not in header:
        raise MissingTarget(f"target column {target!r} not in header of {path}")
    if not rows:
        raise EmptyTable(f"{path} has a header but no rows")
    for k, row in enumerate(rows):
        if len(row) != len(header):
            raise RaggedRows(f"line {k + 2} has {len(row)} values, header has {len(header)}")
    t = header.index(target)
    kept = [row for row in rows if row[t] != ""]
    if len(kept) < len(rows):
        logger.warning("dropped %d rows with missing target", len(rows) - len(kept))
    if not kept:
        raise EmptyTable(f"{path} has no rows with a target value")
    inferred = infer_kinds(header, kept)
    if kinds:
        unknown = set(kinds) - set(header)
        if unknown:
            raise DataError(f"kind override for unknown columns {sorted(unknown)}")
        inferred.update(kinds)
    return RawTable(rows=kept, columns=header, target_column=target, column_kinds=inferred)


@dataclass
class Dataset:
    """Encoded feature matrix in [0, 1] with integer labels."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    feature_names: list[str]
    encoders: dict[str, dict[str, int]] = field(default_factory=dict)
    scalers: dict[str, tuple[float, float]] = field(default_factory=dict)
    classes: list[str] = field(default_factory=list)
    target_name: str = "class"

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2 or len(self.features) != len(self.labels):
            raise DataError("features must be n x p with one label per row")
        if not self.classes:
            self.classes = [str(c) for c in range(self.class_count)]

    def __len__(self):
        return len(self.labels)

    @property
    def n_features(self) -> int:
        return self.features.shape[1]

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=np.int64)
        return Dataset(
            features=self.features[idx],
            labels=self.labels[idx],
            class_count=self.class_count,
            feature_names=list(self.feature_names),
            encoders=self.encoders,
            scalers=self.scalers,
            classes=list(self.classes),
            target_name=self.target_name,
        )


def _sorted_values(values, numeric: bool) -> list[str]:
    distinct = set(values)
    if numeric:
        return sorted(distinct, key=lambda v: (float(v), v))
    return sorted(distinct)


def preprocess(raw: RawTable, fit_on) -> Dataset:
    """Encode and scale every row of ``raw`` using statistics of ``fit_on``.

    Categorical columns get lexicographic integer codes, numeric columns are
    min-max scaled and clamped into [0, 1].  Missing feature values are filled
    with the fitted median (numeric) or mode (categorical).  Categorical codes
    are then divided by ``max(code_count - 1, 1)`` so that every feature lies
    in the unit interval.
    """
    fit_on = np.asarray(fit_on, dtype=np.int64)
    if fit_on.size == 0:
        raise DataError("fit_on must be non-empty")
    n = len(raw)
    columns = raw.feature_columns
    X = np.zeros((n, len(columns)))
    encoders: dict[str, dict[str, int]] = {}
    scalers: dict[str, tuple[float, float]] = {}

    for k, name in enumerate(columns):
        values = raw.column(name)
        fit_values = [values[i] for i in fit_on]
        if raw.column_kinds[name] == NUMERIC:
            observed = np.array([float(v) for v in fit_values if v != ""])
            if observed.size == 0:
                raise DataError(f"column {name!r} has no values in the fitted rows")
            fill = float(np.median(observed))
            col = np.array([float(v) if v != "" else fill for v in values])
            lo, hi = float(observed.min()), float(observed.max())
            scalers[name] = (lo, hi)
            if hi > lo:
                X[:, k] = np.clip((col - lo) / (hi - lo), 0.0, 1.0)
        else:
            present = [v for v in fit_values if v != ""]
            if not present:
                raise DataError(f"column {name!r} has no values in the fitted rows")
            codes = {v: c for c, v in enumerate(sorted(set(present)))}
            counts: dict[str, int] = {}
            for v in present:
                counts[v] = counts.get(v, 0) + 1
            mode = min(counts, key=lambda v: (-counts[v], v))
            encoders[name] = codes
            col = np.empty(n)
            for i, v in enumerate(values):
                v = v if v != "" else mode
                if v not in codes:
                    raise UnseenCategory(f"value {v!r} of column {name!r} not seen at fit time")
                col[i] = codes[v]
            X[:, k] = col / max(len(codes) - 1, 1)

    target = raw.column(raw.target_column)
    classes = _sorted_values(target, raw.column_kinds[raw.target_column] == NUMERIC)
    lookup = {v: c for c, v in enumerate(classes)}
    y = np.array([lookup[v] for v in target], dtype=np.int64)
    return Dataset(
        features=X,
        labels=y,
        class_count=len(classes),
        feature_names=columns,
        encoders=encoders,
        scalers=scalers,
        classes=classes,
        target_name=raw.target_column,
    )


@dataclass(frozen=True)
class DataSplit:
    train_idx: np.ndarray
    val_idx: np.ndarray
    test_idx: np.ndarray
    seed: int

    @property
    def sizes(self) -> tuple[int, int, int]:
        return len(self.train_idx), len(self.val_idx), len(self.test_idx)


def split(n: int, seed: int) -> DataSplit:
    """Seeded 80/10/10 split: floor train, floor validation, remainder test."""
    if n < 10:
        raise TooFewInstances(f"need at least 10 instances to split, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    n_train = (8 * n) // 10
    n_val = n // 10
    return DataSplit(
        train_idx=perm[:n_train],
        val_idx=perm[n_train:n_train + n_val],
        test_idx=perm[n_train + n_val:],
        seed=seed,
    )


def shuffle_indices(n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise DataError("n must be positive")
    return np.random.default_rng(seed).permutation(n)


@dataclass(frozen=True)
class ChunkSpec:
    window: int = 8000
    overlap: int | None = None

    def __post_init__(self):
        if self.window < 1:
            raise InvalidOverlap("window must be positive")
        if self.overlap is None:
            object.__setattr__(self, "overlap", self.window // 8)
        if not 0 <= self.overlap < self.window:
            raise InvalidOverlap(f"overlap {self.overlap} must be in [0, {self.window})")


@dataclass(frozen=True)
class Chunk:
    ordinal: int
    member_idx: np.ndarray


def chunk_count(n: int, spec: ChunkSpec) -> int:
    if n <= spec.window:
        return 1
    stride = spec.window - spec.overlap
    return -(-(n - spec.overlap) // stride)


def make_chunks(n: int, spec: ChunkSpec) -> list[Chunk]:
    """Overlapping windows over positions ``0..n-1``; ordinals start at 1."""
    if n < 1:
        raise DataError("cannot chunk an empty training set")
    stride = spec.window - spec.overlap
    chunks = []
    for j in range(1, chunk_count(n, spec) + 1):
        start = (j - 1) * stride
        chunks.append(Chunk(j, np.arange(start, min(start + spec.window, n))))
    return chunks


_SYNTH_DIM = 20
_SYNTH_SHIFT = 2.0 / math.sqrt(_SYNTH_DIM)


def _scale_unit(X: np.ndarray) -> tuple[np.ndarray, dict[str, tuple[float, float]]]:
    lo, hi = X.min(axis=0), X.max(axis=0)
    span = np.where(hi > lo, hi - lo, 1.0)
    names = [f"x{k + 1}" for k in range(X.shape[1])]
    scalers = {name: (float(a), float(b)) for name, a, b in zip(names, lo, hi)}
    return np.clip((X - lo) / span, 0.0, 1.0), scalers


def _synthetic(n: int, seed: int, sampler) -> Dataset:
    if n < 4:
        raise DataError(f"synthetic generators need n >= 4, got {n}")
    per_class = n // 2
    rng = np.random.default_rng(seed)
    X0, X1 = sampler(rng, per_class)
    X = np.vstack([X0, X1])
    y = np.repeat([0, 1], per_class)
    order = rng.permutation(len(y))
    X, y = X[order], y[order]
    X, scalers = _scale_unit(X)
    return Dataset(
        features=X,
        labels=y,
        class_count=2,
        feature_names=list(scalers),
        scalers=scalers,
        classes=["0", "1"],
    )


def generate_twonorm(n: int, seed: int) -> Dataset:
    """Breiman's two-norm: unit-variance Gaussians centred at +a and -a."""

    def sampler(rng, m):
        return (
            rng.normal(_SYNTH_SHIFT, 1.0, size=(m, _SYNTH_DIM)),
            rng.normal(-_SYNTH_SHIFT, 1.0, size=(m, _SYNTH_DIM)),
        )

    return _synthetic(n, seed, sampler)


def generate_ringnorm(n: int, seed: int) -> Dataset:
    """Breiman's ring-norm: N(0, 4I) against N(a, I)."""

    def sampler(rng, m):
        return (
            rng.normal(0.0, 2.0, size=(m, _SYNTH_DIM)),
            rng.normal(_SYNTH_SHIFT, 1.0, size=(m, _SYNTH_DIM)),
        )

    return _synthetic(n, seed, sampler)


GENERATORS = {"twonorm": generate_twonorm, "ringnorm": generate_ringnorm}


def _fmt(value: float) -> str:
    return repr(float(value))


def write_dataset_csv(dataset: Dataset, path, idx=None) -> None:
    """Write encoded features plus the encoded target column."""
    idx = np.arange(len(dataset)) if idx is None else np.asarray(idx)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow([*dataset.feature_names, dataset.target_name])
        for i in idx:
            writer.writerow([*map(_fmt, dataset.features[i]), int(dataset.labels[i])])


def write_raw_rows(raw: RawTable, path, idx) -> None:
    """Write selected rows in their original column format."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(raw.columns)
        for i in idx:
            writer.writerow(raw.rows[int(i)])
