from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gais.errors import ShapeError
from gais.metrics import (
    MetricsReport,
    classification_metrics,
    crosscheck_reference_tables,
    effectiveness,
    load_reference_results,
    load_reference_effectiveness,
    reduction_rate,
)


def confusion(tp, tn, fp, fn):
    y_true = [1] * tp + [0] * tn + [0] * fp + [1] * fn
    y_pred = [1] * tp + [0] * tn + [1] * fp + [0] * fn
    return y_true, y_pred


class TestClassification:
    def test_confusion_example(self):
        ac, pr, re, f1 = classification_metrics(*confusion(3, 4, 2, 1))
        assert (ac, pr, re) == (pytest.approx(0.7), pytest.approx(0.6), pytest.approx(0.75))
        assert f1 == pytest.approx(0.6667, abs=1e-4)

    def test_perfect(self):
        assert classification_metrics([0, 1, 1, 0], [0, 1, 1, 0]) == (1.0, 1.0, 1.0, 1.0)

    def test_no_positive_predictions(self):
        _, pr, re, f1 = classification_metrics([1, 1, 0], [0, 0, 0])
        assert (pr, re, f1) == (0.0, 0.0, 0.0)

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            classification_metrics([0, 1], [0])

    def test_macro_three_classes(self):
        y_true, y_pred = [0, 0, 1, 1, 2, 2], [0, 1, 1, 1, 2, 0]
        _, pr, re, f1 = classification_metrics(y_true, y_pred, "macro", 3)
        # per class precision 1/2, 2/3, 1; recall 1/2, 1, 1/2
        assert pr == pytest.approx((0.5 + 2 / 3 + 1) / 3)
        assert re == pytest.approx((0.5 + 1 + 0.5) / 3)
        f1s = [2 * p * r / (p + r) for p, r in ((0.5, 0.5), (2 / 3, 1), (1, 0.5))]
        assert f1 == pytest.approx(np.mean(f1s))

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 3), st.integers(0, 3)), min_size=1, max_size=40),
           st.permutations(range(4)))
    def test_macro_label_permutation(self, pairs, perm):
        t, p = np.array(pairs).T
        perm = np.array(perm)
        a = classification_metrics(t, p, "macro", 4)
        b = classification_metrics(perm[t], perm[p], "macro", 4)
        np.testing.assert_allclose(a, b, atol=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 1), st.integers(0, 1)), min_size=1, max_size=40))
    def test_bounds_and_f1_zero(self, pairs):
        t, p = np.array(pairs).T
        ac, pr, re, f1 = classification_metrics(t, p)
        assert all(0 <= v <= 1 for v in (ac, pr, re, f1))
        assert (f1 == 0) == (pr * re == 0)
        assert f1 <= max(pr, re) + 1e-12


class TestReductionAndEffectiveness:
    def test_examples(self):
        assert reduction_rate(244, 244) == 0
        assert reduction_rate(0, 100) == 1
        assert reduction_rate(11, 244) == pytest.approx(0.95492, abs=5e-6)
        assert effectiveness(0.9355, 0.9549) == pytest.approx(0.8933, abs=5e-5)
        assert effectiveness(0.8617, 0.9627) == pytest.approx(0.8296, abs=5e-5)
        assert effectiveness(1.0, 0.0) == 0.0

    def test_heart_row_count(self):
        heart = next(r for r in load_reference_results() if r["dataset"] == "Heart Disease")
        assert heart["TR_A"] == 244 and round(244 * (1 - heart["R"])) == 11

    def test_invalid(self):
        with pytest.raises(ValueError):
            reduction_rate(5, 4)
        with pytest.raises(ValueError):
            reduction_rate(0, 0)

    def test_report_identity(self, rng):
        for _ in range(20):
            y, p = rng.integers(0, 3, 30), rng.integers(0, 3, 30)
            k = int(rng.integers(0, 101))
            rep = MetricsReport.build(y, p, 3, n_selected=k, n_original=100)
            assert rep.averaging == "macro"
            assert abs(rep.effectiveness - rep.accuracy * rep.reduction_rate) <= 1e-12

    def test_tolerance(self):
        rep = MetricsReport.build([0, 1], [0, 0], 2, tolerance=0.05, full_accuracy=0.52)
        assert rep.within_tolerance is True
        assert rep.to_dict()["within_tolerance"] is True
        assert MetricsReport.build([0, 1], [0, 0], 2).within_tolerance is None


class TestReferenceTables:
    def test_bundled_shapes(self):
        assert len(load_reference_results()) == 13 and len(load_reference_effectiveness()) == 13

    def test_spam_base_product(self):
        row = next(r for r in crosscheck_reference_tables() if r.dataset == "Spam-base")
        assert row.recomputed == pytest.approx(float(Fraction("0.8980") * Fraction("0.9868")), rel=1e-15)
        assert abs(row.recomputed - 0.8862) <= 1e-4
        assert row.flagged and abs(row.recomputed - row.summary_effectiveness) <= 5e-3

    def test_heart_matches(self):
        row = next(r for r in crosscheck_reference_tables() if r.dataset == "Heart Disease")
        assert not row.flagged

    def test_flagged_rows_from_recomputed_products(self):
        # brute recomputation of every product against the reported column
        expected = {r["dataset"] for r in load_reference_results() if abs(r["AC_reduced"] * r["R"] - r["E"]) > 5e-4}
        assert expected == {"Stroke Prediction", "Spam-base", "Two-norm"}
        assert {r.dataset for r in crosscheck_reference_tables() if r.flagged} == expected

    def test_summary_column_follows_the_product(self):
        for row in crosscheck_reference_tables():
            assert abs(row.recomputed - row.summary_effectiveness) <= 5e-3
