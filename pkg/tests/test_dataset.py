import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.distance import cdist

from gais.dataset import (
    CATEGORICAL,
    NUMERIC,
    ChunkSpec,
    RawTable,
    chunk_count,
    generate_ringnorm,
    generate_twonorm,
    load_csv,
    make_chunks,
    preprocess,
    shuffle_indices,
    split,
    write_dataset_csv,
)
from gais.errors import (
    DataError,
    EmptyTable,
    InvalidOverlap,
    MissingTarget,
    RaggedRows,
    TooFewInstances,
    UnseenCategory,
)


def write(tmp_path, text, name="d.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


def table(columns, rows, target="class"):
    return RawTable(rows=rows, columns=columns, target_column=target,
                    column_kinds={c: NUMERIC if all(_num(r[i]) for r in rows) else CATEGORICAL
                                  for i, c in enumerate(columns)})


def _num(v):
    try:
        float(v)
        return True
    except ValueError:
        return False


class TestLoadCsv:
    def test_three_rows(self, tmp_path):
        raw = load_csv(write(tmp_path, "a,b,class\n1,2,x\n3,4,y\n5,6,x\n"), "class")
        assert len(raw) == 3
        assert raw.feature_columns == ["a", "b"]

    def test_categorical_inference(self, tmp_path):
        raw = load_csv(write(tmp_path, "a,b,class\n1,2,x\n3,x,y\n5,6,x\n"), "class")
        assert raw.column_kinds["b"] == CATEGORICAL
        assert raw.column_kinds["a"] == NUMERIC

    def test_kind_override(self, tmp_path):
        raw = load_csv(write(tmp_path, "a,class\n1,x\n2,y\n"), "class", kinds={"a": CATEGORICAL})
        assert raw.column_kinds["a"] == CATEGORICAL

    def test_missing_target(self, tmp_path):
        with pytest.raises(MissingTarget):
            load_csv(write(tmp_path, "a,b\n1,2\n"), "class")

    def test_missing_file(self, tmp_path):
        with pytest.raises(DataError):
            load_csv(tmp_path / "nope.csv", "class")

    def test_ragged(self, tmp_path):
        with pytest.raises(RaggedRows):
            load_csv(write(tmp_path, "a,class\n1,x\n2\n"), "class")

    def test_empty(self, tmp_path):
        with pytest.raises(EmptyTable):
            load_csv(write(tmp_path, ""), "class")
        with pytest.raises(EmptyTable):
            load_csv(write(tmp_path, "a,class\n"), "class")

    def test_rows_without_target_dropped(self, tmp_path):
        raw = load_csv(write(tmp_path, "a,class\n1,x\n2,\n3,y\n"), "class")
        assert raw.column("a") == ["1", "3"]

    def test_row_order_preserved(self, tmp_path):
        raw = load_csv(write(tmp_path, "a,class\n3,x\n1,y\n2,x\n"), "class")
        assert raw.column("a") == ["3", "1", "2"]


class TestPreprocess:
    def test_numeric_minmax(self):
        ds = preprocess(table(["a", "class"], [["2", "x"], ["4", "y"], ["6", "x"]]), [0, 1, 2])
        np.testing.assert_allclose(ds.features[:, 0], [0, 0.5, 1])

    def test_categorical_lexicographic(self):
        ds = preprocess(table(["c", "class"], [["red", "x"], ["green", "y"], ["red", "x"]]), [0, 1, 2])
        assert ds.encoders["c"] == {"green": 0, "red": 1}
        np.testing.assert_allclose(ds.features[:, 0], [1, 0, 1])

    def test_categorical_codes_scaled_into_unit_interval(self):
        ds = preprocess(table(["c", "class"], [["a", "x"], ["b", "y"], ["c", "x"]]), [0, 1, 2])
        np.testing.assert_allclose(ds.features[:, 0], [0, 0.5, 1])

    def test_constant_column(self):
        ds = preprocess(table(["a", "class"], [["5", "x"], ["5", "y"], ["5", "x"]]), [0, 1, 2])
        np.testing.assert_array_equal(ds.features[:, 0], [0, 0, 0])

    def test_fit_on_subset_clamps(self):
        ds = preprocess(table(["a", "class"], [["0", "x"], ["10", "y"], ["-5", "x"], ["20", "y"]]), [0, 1])
        np.testing.assert_allclose(ds.features[:, 0], [0, 1, 0, 1])
        assert ds.scalers["a"] == (0.0, 10.0)

    def test_unseen_category(self):
        with pytest.raises(UnseenCategory):
            preprocess(table(["c", "class"], [["a", "x"], ["b", "y"], ["z", "x"]]), [0, 1])

    def test_target_lexicographic(self):
        ds = preprocess(table(["a", "class"], [["1", "yes"], ["2", "no"], ["3", "yes"]]), [0, 1, 2])
        assert ds.classes == ["no", "yes"]
        np.testing.assert_array_equal(ds.labels, [1, 0, 1])

    def test_numeric_target_sorted_numerically(self):
        ds = preprocess(table(["a", "class"], [["1", "10"], ["2", "9"], ["3", "10"]]), [0, 1, 2])
        assert ds.classes == ["9", "10"]

    def test_missing_values_imputed(self):
        raw = table(["a", "c", "class"], [["1", "p", "x"], ["", "", "y"], ["3", "p", "x"], ["5", "q", "y"]])
        raw.column_kinds.update({"a": NUMERIC, "c": CATEGORICAL})
        ds = preprocess(raw, [0, 1, 2, 3])
        assert ds.features[1, 0] == pytest.approx(0.5)  # median 3 of {1,3,5}
        assert ds.features[1, 1] == 0.0  # mode "p"
        assert np.all(np.isfinite(ds.features))

    def test_empty_fit_on(self):
        with pytest.raises(DataError):
            preprocess(table(["a", "class"], [["1", "x"], ["2", "y"]]), [])

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=3, max_size=30), st.integers(0, 2**31 - 1))
    def test_features_in_unit_interval_and_idempotent(self, values, seed):
        rows = [[repr(v), "x" if i % 2 else "y"] for i, v in enumerate(values)]
        raw = table(["a", "class"], rows)
        fit_on = np.random.default_rng(seed).permutation(len(rows))[: max(1, len(rows) // 2)]
        ds = preprocess(raw, fit_on)
        assert np.all((ds.features >= 0) & (ds.features <= 1))
        again = preprocess(raw, fit_on)
        np.testing.assert_array_equal(ds.features, again.features)
        if len(set(values[i] for i in fit_on)) > 1:
            fitted = ds.features[fit_on, 0]
            assert fitted.min() == 0.0 and fitted.max() == 1.0


class TestSplit:
    def test_sizes(self):
        assert split(100, 0).sizes == (80, 10, 10)
        assert split(303, 0).sizes == (242, 30, 31)

    def test_deterministic(self):
        a, b = split(500, 7), split(500, 7)
        for x, y in zip((a.train_idx, a.val_idx, a.test_idx), (b.train_idx, b.val_idx, b.test_idx)):
            np.testing.assert_array_equal(x, y)

    def test_too_few(self):
        with pytest.raises(TooFewInstances):
            split(9, 0)

    def test_disjoint_exhaustive_1000_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(1000):
            n = int(rng.integers(10, 400))
            s = split(n, int(rng.integers(1 << 31)))
            allidx = np.concatenate([s.train_idx, s.val_idx, s.test_idx])
            assert len(allidx) == n
            np.testing.assert_array_equal(np.sort(allidx), np.arange(n))
            assert s.sizes[:2] == (math.floor(0.8 * n + 1e-9), n // 10)


class TestShuffle:
    def test_single(self):
        np.testing.assert_array_equal(shuffle_indices(1, 3), [0])

    def test_bijection(self):
        np.testing.assert_array_equal(np.sort(shuffle_indices(1000, 5)), np.arange(1000))

    def test_seeds_differ(self):
        assert not np.array_equal(shuffle_indices(1000, 1), shuffle_indices(1000, 2))


class TestChunks:
    def test_three_chunks(self):
        chunks = make_chunks(20, ChunkSpec(8, 2))
        assert [(c.member_idx[0], c.member_idx[-1] + 1) for c in chunks] == [(0, 8), (6, 14), (12, 20)]
        assert [c.ordinal for c in chunks] == [1, 2, 3]

    def test_single_chunk(self):
        chunks = make_chunks(8000, ChunkSpec(8000, 0))
        assert len(chunks) == 1 and len(chunks[0].member_idx) == 8000

    def test_large_count(self):
        assert chunk_count(100968, ChunkSpec(8000, 1000)) == 15

    def test_default_overlap(self):
        assert ChunkSpec(8000).overlap == 1000

    def test_invalid_overlap(self):
        with pytest.raises(InvalidOverlap):
            ChunkSpec(8, 8)
        with pytest.raises(InvalidOverlap):
            ChunkSpec(8, -1)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(1, 5000), st.integers(1, 600), st.data())
    def test_tiling(self, n, w, data):
        o = data.draw(st.integers(0, w - 1))
        chunks = make_chunks(n, ChunkSpec(w, o))
        expected = 1 if n <= w else math.ceil((n - o) / (w - o))
        assert len(chunks) == expected
        for a, b in zip(chunks, chunks[1:]):
            assert len(np.intersect1d(a.member_idx, b.member_idx)) == o
        assert all(len(c.member_idx) <= w for c in chunks)
        np.testing.assert_array_equal(np.unique(np.concatenate([c.member_idx for c in chunks])), np.arange(n))


class TestGenerators:
    def test_twonorm_shape(self):
        ds = generate_twonorm(100, 0)
        assert ds.features.shape == (100, 20)
        np.testing.assert_array_equal(np.bincount(ds.labels), [50, 50])
        assert ds.features.min() >= 0 and ds.features.max() <= 1

    def test_odd_rounds_down(self):
        assert len(generate_ringnorm(101, 0)) == 100

    def test_deterministic(self):
        a, b = generate_twonorm(200, 4), generate_twonorm(200, 4)
        np.testing.assert_array_equal(a.features, b.features)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_too_small(self):
        with pytest.raises(DataError):
            generate_ringnorm(0, 0)

    def test_twonorm_nearly_separable(self):
        # held-out 1-NN accuracy on a large sample (cross-validation in one fold)
        ds = generate_twonorm(20000, 1)
        X, y = ds.features, ds.labels
        test = np.arange(0, 20000, 10)
        train = np.setdiff1d(np.arange(20000), test)
        nearest = train[np.argmin(cdist(X[test], X[train]), axis=1)]
        assert np.mean(y[nearest] == y[test]) >= 0.9

    def test_ringnorm_class_structure(self):
        ds = generate_ringnorm(4000, 0)
        spread = [ds.features[ds.labels == c].std(axis=0).mean() for c in (0, 1)]
        assert spread[0] > 1.5 * spread[1]

    def test_csv_round_trip(self, tmp_path):
        ds = generate_twonorm(10, 0)
        path = tmp_path / "t.csv"
        write_dataset_csv(ds, path)
        raw = load_csv(path, "class")
        assert len(raw) == 10 and len(raw.columns) == 21
        back = np.array([[float(v) for v in row[:-1]] for row in raw.rows])
        np.testing.assert_array_equal(back, ds.features)
