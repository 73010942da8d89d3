"""Classification metrics, reduction rate, effectiveness and the reference-table check."""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from importlib import resources

import numpy as np

from .errors import ShapeError

E_TOLERANCE = 5e-4


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def _f1(pr: float, re: float) -> float:
    return _safe_div(2 * pr * re, pr + re)


def classification_metrics(y_true, y_pred, averaging: str = "binary", n_classes: int | None = None):
    """Return ``(accuracy, precision, recall, f1)``.

    ``binary`` treats class 1 as positive.  ``macro`` averages one-vs-rest
    scores over ``n_classes`` classes (default: every label that occurs in
    either array).  Zero denominators yield 0.
    """
    y_true = np.asarray(y_true)
    y_pred = np.asarray(y_pred)
    if y_true.shape != y_pred.shape or y_true.ndim != 1:
        raise ShapeError("y_true and y_pred must be 1-D and equally long")
    if y_true.size == 0:
        raise ShapeError("metrics need at least one prediction")
    acc = float(np.mean(y_true == y_pred))
    if averaging == "binary":
        tp = int(np.sum((y_pred == 1) & (y_true == 1)))
        fp = int(np.sum((y_pred == 1) & (y_true != 1)))
        fn = int(np.sum((y_pred != 1) & (y_true == 1)))
        pr, re = _safe_div(tp, tp + fp), _safe_div(tp, tp + fn)
        return acc, pr, re, _f1(pr, re)
    if averaging != "macro":
        raise ValueError(f"unknown averaging {averaging!r}")
    classes = range(n_classes) if n_classes else np.union1d(y_true, y_pred)
    prs, res, f1s = [], [], []
    for c in classes:
        tp = int(np.sum((y_pred == c) & (y_true == c)))
        fp = int(np.sum((y_pred == c) & (y_true != c)))
        fn = int(np.sum((y_pred != c) & (y_true == c)))
        pr, re = _safe_div(tp, tp + fp), _safe_div(tp, tp + fn)
        prs.append(pr)
        res.append(re)
        f1s.append(_f1(pr, re))
    return acc, float(np.mean(prs)), float(np.mean(res)), float(np.mean(f1s))


def averaging_for(n_classes: int) -> str:
    return "binary" if n_classes <= 2 else "macro"


def reduction_rate(n_selected: int, n_original: int) -> float:
    if n_original < 1 or not 0 <= n_selected <= n_original:
        raise ValueError(f"need 0 <= n_selected <= n_original, n_original >= 1 (got {n_selected}, {n_original})")
    return 1.0 - n_selected / n_original


def effectiveness(accuracy: float, reduction: float) -> float:
    return accuracy * reduction


@dataclass
class MetricsReport:
    accuracy: float
    precision: float
    recall: float
    f1: float
    averaging: str
    reduction_rate: float | None = None
    effectiveness: float | None = None
    t_is_seconds: float | None = None
    tolerance: float | None = None
    full_accuracy: float | None = None

    @classmethod
    def build(cls, y_true, y_pred, n_classes, n_selected=None, n_original=None, t_is_seconds=None,
              tolerance=None, full_accuracy=None) -> "MetricsReport":
        averaging = averaging_for(n_classes)
        acc, pr, re, f1 = classification_metrics(y_true, y_pred, averaging, n_classes)
        report = cls(acc, pr, re, f1, averaging, t_is_seconds=t_is_seconds,
                     tolerance=tolerance, full_accuracy=full_accuracy)
        if n_original is not None:
            report.reduction_rate = reduction_rate(n_selected, n_original)
            report.effectiveness = effectiveness(acc, report.reduction_rate)
        return report

    @property
    def within_tolerance(self) -> bool | None:
        """Whether accuracy stays within ``tolerance`` of the full-data accuracy."""
        if self.tolerance is None or self.full_accuracy is None:
            return None
        return self.accuracy >= self.full_accuracy - self.tolerance

    def to_dict(self) -> dict:
        d = asdict(self)
        d["within_tolerance"] = self.within_tolerance
        return d


def _read_table(name: str) -> list[dict]:
    text = resources.files("gais.data").joinpath(name).read_text(encoding="utf-8")
    return list(csv.DictReader(text.splitlines()))


def load_reference_results() -> list[dict]:
    """Published per-dataset results of the selector: training size, reduced
    and full-data metrics, R and E."""
    rows = _read_table("reference_results.csv")
    for row in rows:
        for k, v in row.items():
            if k != "dataset":
                row[k] = int(v) if k == "TR_A" else float(v)
    return rows


def load_reference_effectiveness() -> list[dict]:
    """Published effectiveness of every compared selector; blanks become NaN."""
    rows = _read_table("reference_effectiveness.csv")
    for row in rows:
        for k, v in row.items():
            if k != "dataset":
                row[k] = float(v) if v else math.nan
    return rows


@dataclass
class CrosscheckRow:
    dataset: str
    accuracy: float
    reduction: float
    reported: float
    recomputed: float
    summary_effectiveness: float
    flagged: bool

    @property
    def gap(self) -> float:
        return abs(self.recomputed - self.reported)


def crosscheck_reference_tables(tolerance: float = E_TOLERANCE) -> list[CrosscheckRow]:
    """Recompute E = AC x R for every bundled reference row and flag rows whose
    reported E differs by more than ``tolerance``."""
    gais = {row["dataset"]: row["GAIS"] for row in load_reference_effectiveness()}
    out = []
    for row in load_reference_results():
        e = effectiveness(row["AC_reduced"], row["R"])
        out.append(CrosscheckRow(
            dataset=row["dataset"],
            accuracy=row["AC_reduced"],
            reduction=row["R"],
            reported=row["E"],
            recomputed=e,
            summary_effectiveness=gais[row["dataset"]],
            flagged=abs(e - row["E"]) > tolerance,
        ))
    return out
