"""Calibration table construction, probability intervals, prediction."""

from fractions import Fraction

import numpy as np
import pytest

from ivenn.ivp import (
    CalibrationTable,
    calibrate,
    intervals,
    load_table,
    predict,
    save_table,
)
from ivenn.taxonomy import TaxonomyConfig, TaxonomyKind, category_count, fit_taxonomy


def table_from_counts(counts, kind=TaxonomyKind.BASE_V1, **cfg_kw):
    counts = np.asarray(counts, dtype=np.int64)
    cfg = TaxonomyConfig(kind=kind, class_count=counts.shape[1], **cfg_kw)
    assert counts.shape[0] == category_count(cfg)
    return CalibrationTable(counts=counts, config=cfg)


class TestIntervals:
    def test_hand_counts(self):
        table = table_from_counts([[3, 1, 0], [0, 0, 0], [0, 0, 0]])
        lower, upper = intervals(table, 0)
        assert lower.tolist() == [0.6, 0.2, 0.0]
        assert upper.tolist() == [0.8, 0.4, 0.2]

    def test_empty_category_vacuous(self):
        table = table_from_counts([[3, 1, 0], [0, 0, 0], [0, 0, 0]])
        lower, upper = intervals(table, 1)
        assert lower.tolist() == [0.0, 0.0, 0.0]
        assert upper.tolist() == [1.0, 1.0, 1.0]

    def test_single_class_category(self):
        table = table_from_counts([[0, 0, 7], [0, 0, 0], [0, 0, 0]])
        lower, upper = intervals(table, 0)
        assert lower[2] == 7 / 8 and upper[2] == 1.0

    def test_category_out_of_range(self):
        table = table_from_counts([[1, 1]] * 2)
        with pytest.raises(ValueError, match="category"):
            intervals(table, 2)

    def test_endpoints_are_correctly_rounded_rationals(self):
        """L and U must be exactly the rounded values of n/(N+1) and
        (n+1)/(N+1); the width law U-L = 1/(N+1) then holds exactly in the
        underlying rationals (a float subtraction check cannot express it:
        1 - 2/3 != 1/3 in doubles)."""
        rng = np.random.default_rng(73)
        for _ in range(100):
            c = int(rng.integers(2, 6))
            counts = rng.integers(0, 40, size=(c, c))
            table = table_from_counts(counts)
            for cat in range(c):
                n = counts[cat]
                total = int(n.sum())
                lower, upper = intervals(table, cat)
                for j in range(c):
                    assert lower[j] == float(Fraction(int(n[j]), total + 1))
                    assert upper[j] == float(Fraction(int(n[j]) + 1, total + 1))
                assert lower.sum() <= 1.0 <= upper.sum()


class TestCalibrate:
    def test_counts_land_in_assigned_category(self):
        # k = index size makes every query see the same neighbor multiset
        # (labels 1,1,1,1,1,0,0,0): predicted class 1, 3 disagreements,
        # width 4, so every example lands in category 1*4+3 = 7
        train = np.arange(8.0)[:, None]
        train_labels = np.array([1, 1, 1, 1, 1, 0, 0, 0])
        tax = fit_taxonomy(
            TaxonomyConfig(kind=TaxonomyKind.KNN_V2, class_count=2, k=8),
            train,
            train_labels,
        )
        cal = np.array([[0.5], [3.0], [9.0], [-2.0]])
        table = calibrate(tax, [0, 0, 1, 0], embeddings=cal)
        assert table.counts[7].tolist() == [3, 1]
        assert table.counts.sum() == 4

    def test_empty_calibration_set(self):
        tax = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V1, class_count=3))
        table = calibrate(tax, [], softmaxes=None)
        assert table.counts.shape == (3, 3)
        assert table.counts.sum() == 0

    def test_order_invariance(self):
        rng = np.random.default_rng(79)
        emb = np.vstack([rng.normal(size=(25, 2)) + (5.0 * j, 0.0) for j in range(3)])
        labels = np.repeat(np.arange(3), 25)
        tax = fit_taxonomy(
            TaxonomyConfig(kind=TaxonomyKind.NC_V1, class_count=3), emb, labels
        )
        cal_emb = rng.normal(size=(40, 2)) * 4.0
        cal_labels = rng.integers(0, 3, 40)
        table = calibrate(tax, cal_labels, embeddings=cal_emb)
        perm = rng.permutation(40)
        permuted = calibrate(tax, cal_labels[perm], embeddings=cal_emb[perm])
        np.testing.assert_array_equal(table.counts, permuted.counts)

    def test_label_out_of_range(self):
        tax = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V1, class_count=2))
        with pytest.raises(ValueError, match="labels"):
            calibrate(tax, [0, 2], softmaxes=np.array([[1.0, 0.0], [0.0, 1.0]]))


class TestPredict:
    def setup_method(self):
        # BASE_V1 categories equal the argmax class, so the softmax vector
        # steers each prediction into a chosen table row
        self.tax = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V1, class_count=3))

    def test_hand_counts(self):
        table = table_from_counts([[3, 1, 0], [0, 0, 0], [0, 0, 0]])
        pred = predict(table, self.tax, softmax=(1.0, 0.0, 0.0))
        assert pred.predicted_class == 0 and pred.category == 0
        assert (pred.lower[0], pred.upper[0]) == (0.6, 0.8)
        assert not pred.empty_category

    def test_empty_category_flagged(self):
        table = table_from_counts([[3, 1, 0], [0, 0, 0], [0, 0, 0]])
        pred = predict(table, self.tax, softmax=(0.0, 0.0, 1.0))
        assert pred.empty_category
        assert pred.predicted_class == 0
        np.testing.assert_array_equal(pred.lower, 0.0)
        np.testing.assert_array_equal(pred.upper, 1.0)
        np.testing.assert_array_equal(pred.mean, 0.5)

    def test_tied_counts_lowest_index(self):
        table = table_from_counts([[2, 2], [0, 0]], kind=TaxonomyKind.BASE_V1)
        tax = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V1, class_count=2))
        pred = predict(table, tax, softmax=(1.0, 0.0))
        np.testing.assert_array_equal(pred.mean, 0.5)
        assert pred.predicted_class == 0

    def test_mean_is_interval_midpoint(self):
        table = table_from_counts([[5, 2, 1], [0, 0, 0], [0, 0, 0]])
        pred = predict(table, self.tax, softmax=(0.9, 0.1, 0.0))
        np.testing.assert_allclose(pred.mean, (pred.lower + pred.upper) / 2.0)
        assert pred.predicted_class == int(np.argmax(pred.mean))

    def test_taxonomy_mismatch_rejected(self):
        table = table_from_counts([[1, 0, 0], [0, 0, 0], [0, 0, 0]])
        other = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V2, class_count=3))
        with pytest.raises(ValueError, match="does not match"):
            predict(table, other, softmax=(1.0, 0.0, 0.0))
        narrower = fit_taxonomy(TaxonomyConfig(kind=TaxonomyKind.BASE_V1, class_count=2))
        with pytest.raises(ValueError, match="does not match"):
            predict(table, narrower, softmax=(1.0, 0.0))

    def test_monotone_in_added_count(self):
        rng = np.random.default_rng(83)
        for _ in range(50):
            counts = rng.integers(0, 10, size=(3, 3))
            j = int(rng.integers(3))
            base = table_from_counts(counts)
            bumped_counts = counts.copy()
            bumped_counts[0, j] += 1
            bumped = table_from_counts(bumped_counts)
            lo_before, _ = intervals(base, 0)
            lo_after, _ = intervals(bumped, 0)
            assert lo_after[j] >= lo_before[j]


class TestPersistence:
    def test_round_trip_exact(self, tmp_path):
        rng = np.random.default_rng(89)
        counts = rng.integers(0, 50, size=(6, 3))
        cfg = TaxonomyConfig(
            kind=TaxonomyKind.NC_V2, class_count=3, theta=1.2345678901234567
        )
        table = CalibrationTable(counts=counts.astype(np.int64), config=cfg)
        path = tmp_path / "table.txt"
        save_table(table, path)
        loaded = load_table(path)
        np.testing.assert_array_equal(loaded.counts, table.counts)
        assert loaded.config == cfg

    def test_round_trip_none_theta_and_thresholds(self, tmp_path):
        table = table_from_counts(
            np.zeros((8, 4), dtype=np.int64),
            kind=TaxonomyKind.BASE_V2,
            max_output_threshold=0.6,
        )
        path = tmp_path / "table.txt"
        save_table(table, path)
        loaded = load_table(path)
        assert loaded.config == table.config
        assert loaded.config.theta is None
        assert loaded.counts.sum() == 0

    def test_knn_table_round_trip(self, tmp_path):
        rng = np.random.default_rng(97)
        cfg = TaxonomyConfig(kind=TaxonomyKind.KNN_V2, class_count=3, k=5)
        counts = rng.integers(0, 9, size=(category_count(cfg), 3)).astype(np.int64)
        table = CalibrationTable(counts=counts, config=cfg)
        save_table(table, tmp_path / "t.txt")
        loaded = load_table(tmp_path / "t.txt")
        np.testing.assert_array_equal(loaded.counts, counts)
        assert loaded.config.k == 5

    def test_wrong_file_rejected(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("not a table\n")
        with pytest.raises(ValueError, match="not a"):
            load_table(path)
