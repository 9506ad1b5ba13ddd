"""Venn taxonomies: rules that place an example into a category of mutually
similar points. Four are distance-based over a learned embedding space
(k-NN and nearest-centroid, each with a refined variant) and four are
softmax-based splits of the predicted class.

Every assign function is pure and deterministic; ties always resolve the
same way on every run.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from ivenn.space import CentroidSet, KdIndex, build_centroids, build_index, knn, nearest_centroid


class TaxonomyKind(Enum):
    KNN_V1 = "knn_v1"
    KNN_V2 = "knn_v2"
    NC_V1 = "nc_v1"
    NC_V2 = "nc_v2"
    BASE_V1 = "base_v1"
    BASE_V2 = "base_v2"
    BASE_V3 = "base_v3"
    BASE_V4 = "base_v4"


DISTANCE_KINDS = (TaxonomyKind.KNN_V1, TaxonomyKind.KNN_V2, TaxonomyKind.NC_V1, TaxonomyKind.NC_V2)
BASELINE_KINDS = (TaxonomyKind.BASE_V1, TaxonomyKind.BASE_V2, TaxonomyKind.BASE_V3, TaxonomyKind.BASE_V4)


@dataclass(frozen=True)
class TaxonomyConfig:
    kind: TaxonomyKind
    class_count: int
    k: int = 5
    theta: float | None = None  # None means: resolve from proper-training data
    max_output_threshold: float = 0.75
    second_output_threshold: float = 0.25
    output_gap_threshold: float = 0.5

    def validate(self):
        if self.class_count < 2:
            raise ValueError("class_count must be at least 2")
        if self.k < 1:
            raise ValueError("k must be at least 1")
        if self.theta is not None and self.theta <= 0:
            raise ValueError("theta must be positive")


def category_count(cfg):
    """Number of categories the configured taxonomy can produce."""
    cfg.validate()
    c = cfg.class_count
    if cfg.kind in (TaxonomyKind.KNN_V1, TaxonomyKind.NC_V1, TaxonomyKind.BASE_V1):
        return c
    if cfg.kind is TaxonomyKind.KNN_V2:
        return c * (cfg.k - cfg.k // c)
    # NC_V2 and BASE_V2..V4 split every class category in two
    return 2 * c


def _vote(dists, votes_labels, class_count):
    # majority class; ties go to the smallest summed neighbor distance,
    # then the lowest class index
    votes = np.bincount(votes_labels, minlength=class_count)
    top = votes.max()
    tied = np.flatnonzero(votes == top)
    if len(tied) == 1:
        return int(tied[0])
    sums = np.array([dists[votes_labels == cls].sum() for cls in tied])
    return int(tied[np.argmin(sums)])


def assign_knn_v1(index, r, cfg):
    """Category = majority class among the k nearest training embeddings."""
    dists, ids = knn(index, r, cfg.k)
    return _vote(dists, index.labels[ids], cfg.class_count)


def assign_knn_v2(index, r, cfg):
    """Refines the k-NN category by how many of the k neighbors disagree
    with the predicted class."""
    dists, ids = knn(index, r, cfg.k)
    neighbor_labels = index.labels[ids]
    yhat = _vote(dists, neighbor_labels, cfg.class_count)
    width = cfg.k - cfg.k // cfg.class_count
    disagree = int((neighbor_labels != yhat).sum())
    if disagree >= width:
        warnings.warn(
            f"k-NN V2 disagreement count {disagree} reached the category width "
            f"{width}; clamping (all-way vote tie)",
            RuntimeWarning,
        )
        disagree = width - 1
    return yhat * width + disagree


def assign_nc_v1(cs, r, cfg):
    """Category = class of the nearest centroid."""
    j, _ = nearest_centroid(cs, r)
    return j


def assign_nc_v2(cs, r, cfg):
    """Splits each nearest-centroid category by whether the example sits
    within distance theta of that centroid (inclusive)."""
    if cfg.theta is None:
        raise ValueError("theta is unresolved; fit the taxonomy or set it explicitly")
    j, d = nearest_centroid(cs, r)
    h = 0 if d <= cfg.theta else 1
    return 2 * j + h


def assign_baseline(softmax_vector, cfg):
    """Softmax-based categories: the predicted class, optionally split in two
    by the top output (>= 0.75), the second output (<= 0.25), or the gap
    between them (>= 0.5)."""
    sv = np.asarray(softmax_vector, dtype=float)
    if sv.shape != (cfg.class_count,):
        raise ValueError(f"softmax vector has shape {sv.shape}, expected ({cfg.class_count},)")
    if sv.min() < 0.0 or abs(sv.sum() - 1.0) > 1e-6:
        raise ValueError("softmax vector entries must be nonnegative and sum to 1 (tol 1e-6)")
    top_class = int(np.argmax(sv))
    if cfg.kind is TaxonomyKind.BASE_V1:
        return top_class
    top = float(sv[top_class])
    second = float(np.partition(sv, -2)[-2])
    if cfg.kind is TaxonomyKind.BASE_V2:
        h = 0 if top >= cfg.max_output_threshold else 1
    elif cfg.kind is TaxonomyKind.BASE_V3:
        h = 0 if second <= cfg.second_output_threshold else 1
    elif cfg.kind is TaxonomyKind.BASE_V4:
        h = 0 if top - second >= cfg.output_gap_threshold else 1
    else:
        raise ValueError(f"{cfg.kind} is not a softmax baseline taxonomy")
    return 2 * top_class + h


def resolve_theta(cs, points, labels):
    """Median distance of proper-training points to their own class centroid.

    Degenerate data (every point on its centroid) falls back to half the
    smallest positive inter-centroid distance.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if len(points) == 0:
        raise ValueError("cannot resolve theta from an empty training set")
    own = np.linalg.norm(points - cs.centroids[labels], axis=1)
    theta = float(np.median(own))
    if theta > 0:
        return theta
    gaps = np.linalg.norm(cs.centroids[:, None, :] - cs.centroids[None, :, :], axis=2)
    positive = gaps[gaps > 0]
    if len(positive) == 0:
        raise ValueError("all training points and centroids coincide; theta has no scale")
    return float(positive.min()) / 2.0


@dataclass(frozen=True)
class Taxonomy:
    """A taxonomy fitted to proper-training data: holds whatever structures
    its kind needs (k-d index, centroids, resolved theta) and assigns
    category ids."""

    config: TaxonomyConfig
    index: KdIndex | None = None
    centroids: CentroidSet | None = None

    @property
    def category_count(self):
        return category_count(self.config)

    def assign(self, embedding=None, softmax=None):
        kind = self.config.kind
        if kind in BASELINE_KINDS:
            if softmax is None:
                raise ValueError(f"{kind.value} requires a softmax vector")
            return assign_baseline(softmax, self.config)
        if embedding is None:
            raise ValueError(f"{kind.value} requires an embedding vector")
        if kind is TaxonomyKind.KNN_V1:
            return assign_knn_v1(self.index, embedding, self.config)
        if kind is TaxonomyKind.KNN_V2:
            return assign_knn_v2(self.index, embedding, self.config)
        if kind is TaxonomyKind.NC_V1:
            return assign_nc_v1(self.centroids, embedding, self.config)
        return assign_nc_v2(self.centroids, embedding, self.config)

    def assign_many(self, embeddings=None, softmaxes=None):
        n = len(embeddings) if embeddings is not None else len(softmaxes)
        out = np.empty(n, dtype=np.int64)
        for i in range(n):
            out[i] = self.assign(
                embedding=None if embeddings is None else embeddings[i],
                softmax=None if softmaxes is None else softmaxes[i],
            )
        return out


def fit_taxonomy(cfg, embeddings=None, labels=None):
    """Build the structures the configured taxonomy needs from the
    proper-training embeddings. Baseline kinds need no fitting."""
    cfg.validate()
    if cfg.kind in BASELINE_KINDS:
        return Taxonomy(config=cfg)
    if embeddings is None or labels is None:
        raise ValueError(f"{cfg.kind.value} requires proper-training embeddings and labels")
    if cfg.kind in (TaxonomyKind.KNN_V1, TaxonomyKind.KNN_V2):
        if cfg.k > len(embeddings):
            raise ValueError(f"k={cfg.k} exceeds the {len(embeddings)} training points")
        return Taxonomy(config=cfg, index=build_index(embeddings, labels))
    cs = build_centroids(embeddings, labels, cfg.class_count)
    if cfg.kind is TaxonomyKind.NC_V2 and cfg.theta is None:
        cfg = replace(cfg, theta=resolve_theta(cs, embeddings, labels))
    return Taxonomy(config=cfg, centroids=cs)
