"""Category-assignment rules for all eight taxonomies."""

import numpy as np
import pytest

from ivenn.space import build_centroids, build_index
from ivenn.taxonomy import (
    BASELINE_KINDS,
    DISTANCE_KINDS,
    TaxonomyConfig,
    TaxonomyKind,
    assign_baseline,
    assign_knn_v1,
    assign_knn_v2,
    assign_nc_v1,
    assign_nc_v2,
    category_count,
    fit_taxonomy,
    resolve_theta,
)


def cfg_for(kind, c=3, **kw):
    return TaxonomyConfig(kind=kind, class_count=c, **kw)


def line_index(labels):
    # points on a line at distances 1, 2, 3, ... from the origin query
    pts = np.array([[float(i + 1)] for i in range(len(labels))])
    return build_index(pts, labels)


class TestCategoryCount:
    def test_per_kind(self):
        c, k = 3, 5
        expected = {
            TaxonomyKind.KNN_V1: c,
            TaxonomyKind.KNN_V2: c * (k - k // c),
            TaxonomyKind.NC_V1: c,
            TaxonomyKind.NC_V2: 2 * c,
            TaxonomyKind.BASE_V1: c,
            TaxonomyKind.BASE_V2: 2 * c,
            TaxonomyKind.BASE_V3: 2 * c,
            TaxonomyKind.BASE_V4: 2 * c,
        }
        for kind, count in expected.items():
            assert category_count(cfg_for(kind, c=c, k=k)) == count

    def test_invalid_config(self):
        with pytest.raises(ValueError, match="class_count"):
            category_count(cfg_for(TaxonomyKind.KNN_V1, c=1))
        with pytest.raises(ValueError, match="k must"):
            category_count(cfg_for(TaxonomyKind.KNN_V2, k=0))


class TestKnnV1:
    def test_majority_vote(self):
        index = line_index([1, 1, 2])
        assert assign_knn_v1(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V1, k=3)) == 1

    def test_k1_nearest_label(self):
        index = line_index([2, 0, 0])
        assert assign_knn_v1(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V1, k=1)) == 2

    def test_vote_tie_goes_to_nearer_class(self):
        index = line_index([0, 0, 1, 1])
        assert assign_knn_v1(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V1, c=2, k=4)) == 0


class TestKnnV2:
    def test_two_disagreements(self):
        # c=3, k=5, neighbor labels 1,1,1,2,0: predicted 1, 2 disagree -> 1*(5-1)+2
        index = line_index([1, 1, 1, 2, 0])
        assert assign_knn_v2(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V2, k=5)) == 6

    def test_unanimous_is_zero(self):
        index = line_index([0, 0, 0, 0, 0])
        assert assign_knn_v2(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V2, k=5)) == 0

    def test_maximal_id(self):
        # vote tie 2-2 between classes 2 and 0; class 2 nearer wins; 3 disagree
        index = line_index([2, 2, 0, 1, 0])
        assert assign_knn_v2(index, np.zeros(1), cfg_for(TaxonomyKind.KNN_V2, k=5)) == 11

    def test_all_way_tie_clamps_with_warning(self):
        """c=2 with k=2 makes the category width 1; a 1-1 split vote yields a
        disagreement count equal to the width and must clamp into range."""
        index = line_index([0, 1])
        cfg = cfg_for(TaxonomyKind.KNN_V2, c=2, k=2)
        with pytest.warns(RuntimeWarning, match="clamp"):
            cat = assign_knn_v2(index, np.zeros(1), cfg)
        assert 0 <= cat < category_count(cfg)


class TestNcV1:
    def setup_method(self):
        self.cs = build_centroids([(0.0, 0.0), (10.0, 0.0)], [0, 1], 2)

    def test_at_centroid(self):
        cs = build_centroids(
            [(0.0, 0.0), (5.0, 0.0), (0.0, 5.0), (9.0, 9.0)], [0, 1, 2, 3], 4
        )
        assert assign_nc_v1(cs, np.array([9.0, 9.0]), cfg_for(TaxonomyKind.NC_V1, c=4)) == 3

    def test_nearer_centroid(self):
        assert assign_nc_v1(self.cs, np.array([2.0, 0.0]), cfg_for(TaxonomyKind.NC_V1, c=2)) == 0

    def test_equidistant_lowest_index(self):
        assert assign_nc_v1(self.cs, np.array([5.0, 0.0]), cfg_for(TaxonomyKind.NC_V1, c=2)) == 0


class TestNcV2:
    def setup_method(self):
        self.cs = build_centroids([(0.0,), (10.0,)], [0, 1], 2)

    def test_within_theta(self):
        cfg = cfg_for(TaxonomyKind.NC_V2, c=2, theta=0.5)
        assert assign_nc_v2(self.cs, np.array([10.3]), cfg) == 2

    def test_beyond_theta(self):
        cfg = cfg_for(TaxonomyKind.NC_V2, c=2, theta=0.5)
        assert assign_nc_v2(self.cs, np.array([10.7]), cfg) == 3

    def test_boundary_is_inclusive(self):
        cfg = cfg_for(TaxonomyKind.NC_V2, c=2, theta=0.5)
        assert assign_nc_v2(self.cs, np.array([0.5]), cfg) == 0

    def test_unresolved_theta_rejected(self):
        cfg = cfg_for(TaxonomyKind.NC_V2, c=2)
        with pytest.raises(ValueError, match="theta"):
            assign_nc_v2(self.cs, np.array([1.0]), cfg)


class TestBaselines:
    def test_v1_argmax(self):
        assert assign_baseline((0.1, 0.7, 0.2), cfg_for(TaxonomyKind.BASE_V1)) == 1

    def test_v2_max_output_split(self):
        assert assign_baseline((0.8, 0.1, 0.1), cfg_for(TaxonomyKind.BASE_V2)) == 0
        assert assign_baseline((0.5, 0.3, 0.2), cfg_for(TaxonomyKind.BASE_V2)) == 1

    def test_v2_threshold_inclusive(self):
        assert assign_baseline((0.75, 0.15, 0.1), cfg_for(TaxonomyKind.BASE_V2)) == 0

    def test_v3_second_output_split(self):
        assert assign_baseline((0.7, 0.2, 0.1), cfg_for(TaxonomyKind.BASE_V3)) == 0
        assert assign_baseline((0.6, 0.3, 0.1), cfg_for(TaxonomyKind.BASE_V3)) == 1

    def test_v4_gap_split(self):
        assert assign_baseline((0.8, 0.2), cfg_for(TaxonomyKind.BASE_V4, c=2)) == 0
        assert assign_baseline((0.6, 0.4), cfg_for(TaxonomyKind.BASE_V4, c=2)) == 1

    def test_argmax_tie_lowest_index(self):
        assert assign_baseline((0.4, 0.4, 0.2), cfg_for(TaxonomyKind.BASE_V1)) == 0

    def test_invalid_vector_rejected(self):
        with pytest.raises(ValueError, match="sum to 1"):
            assign_baseline((0.5, 0.3, 0.1), cfg_for(TaxonomyKind.BASE_V2))
        with pytest.raises(ValueError, match="shape"):
            assign_baseline((0.5, 0.5), cfg_for(TaxonomyKind.BASE_V2))


class TestResolveTheta:
    def test_median_single_class(self):
        cs = build_centroids([(0.0,), (2.0,)], [0, 0], 1)
        assert resolve_theta(cs, [(0.0,), (2.0,)], [0, 0]) == 1.0

    def test_even_count_median(self):
        pts = [(0.0,), (2.0,), (7.0,), (13.0,)]
        labels = [0, 0, 1, 1]
        cs = build_centroids(pts, labels, 2)
        assert resolve_theta(cs, pts, labels) == 2.0

    def test_degenerate_falls_back_to_centroid_gap(self):
        pts = [(0.0, 0.0), (4.0, 0.0)]
        labels = [0, 1]
        cs = build_centroids(pts, labels, 2)
        assert resolve_theta(cs, pts, labels) == 2.0

    def test_fully_coincident_rejected(self):
        pts = [(1.0,), (1.0,)]
        labels = [0, 1]
        cs = build_centroids(pts, labels, 2)
        with pytest.raises(ValueError, match="coincide"):
            resolve_theta(cs, pts, labels)


class TestFitTaxonomy:
    def setup_method(self):
        rng = np.random.default_rng(61)
        self.emb = np.vstack(
            [rng.normal(size=(20, 2)) + (6.0 * c, 0.0) for c in range(3)]
        )
        self.labels = np.repeat(np.arange(3), 20)

    def test_nc_v2_resolves_theta(self):
        tax = fit_taxonomy(cfg_for(TaxonomyKind.NC_V2), self.emb, self.labels)
        assert tax.config.theta is not None and tax.config.theta > 0

    def test_explicit_theta_kept(self):
        tax = fit_taxonomy(
            cfg_for(TaxonomyKind.NC_V2, theta=0.77), self.emb, self.labels
        )
        assert tax.config.theta == 0.77

    def test_k_exceeding_data_rejected(self):
        with pytest.raises(ValueError, match="exceeds"):
            fit_taxonomy(cfg_for(TaxonomyKind.KNN_V1, k=100), self.emb[:10], self.labels[:10])

    def test_baseline_needs_no_data(self):
        tax = fit_taxonomy(cfg_for(TaxonomyKind.BASE_V3))
        assert tax.assign(softmax=(0.9, 0.05, 0.05)) == 0

    def test_assign_input_requirements(self):
        tax = fit_taxonomy(cfg_for(TaxonomyKind.KNN_V1), self.emb, self.labels)
        with pytest.raises(ValueError, match="embedding"):
            tax.assign(softmax=(0.5, 0.3, 0.2))
        base = fit_taxonomy(cfg_for(TaxonomyKind.BASE_V1))
        with pytest.raises(ValueError, match="softmax"):
            base.assign(embedding=np.zeros(2))

    def test_distance_kinds_need_training_data(self):
        with pytest.raises(ValueError, match="proper-training"):
            fit_taxonomy(cfg_for(TaxonomyKind.NC_V1))


class TestRefinementInvariants:
    def test_distance_kinds_random_sweep(self):
        rng = np.random.default_rng(67)
        c, k = 3, 5
        emb = np.vstack([rng.normal(size=(30, 2)) + (4.0 * j, 0.0) for j in range(c)])
        labels = np.repeat(np.arange(c), 30)
        taxos = {
            kind: fit_taxonomy(cfg_for(kind, c=c, k=k), emb, labels)
            for kind in DISTANCE_KINDS
        }
        width = k - k // c
        for _ in range(200):
            q = rng.normal(size=2) * 4.0 + (4.0, 0.0)
            cats = {kind: tax.assign(embedding=q) for kind, tax in taxos.items()}
            for kind, cat in cats.items():
                assert 0 <= cat < taxos[kind].category_count
            assert cats[TaxonomyKind.KNN_V2] // width == cats[TaxonomyKind.KNN_V1]
            assert cats[TaxonomyKind.NC_V2] // 2 == cats[TaxonomyKind.NC_V1]

    def test_baseline_kinds_random_sweep(self):
        rng = np.random.default_rng(71)
        c = 4
        taxos = {kind: fit_taxonomy(cfg_for(kind, c=c)) for kind in BASELINE_KINDS}
        for _ in range(200):
            sv = rng.dirichlet(np.ones(c) * rng.uniform(0.3, 3.0))
            cats = {kind: tax.assign(softmax=sv) for kind, tax in taxos.items()}
            top = int(np.argmax(sv))
            assert cats[TaxonomyKind.BASE_V1] == top
            for kind in (TaxonomyKind.BASE_V2, TaxonomyKind.BASE_V3, TaxonomyKind.BASE_V4):
                assert 0 <= cats[kind] < 2 * c
                assert cats[kind] // 2 == top
