"""Embedding-space services: Euclidean distance, class centroids, exact
k-nearest-neighbor search over a k-d tree, and silhouette clustering quality.

All structures here are immutable after construction; concurrent read-only
queries are safe.
"""

from __future__ import annotations

from dataclasses import dataclass
from heapq import heappush, heapreplace

import numpy as np


def distance(a, b):
    """Euclidean distance between two vectors of equal dimension."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.linalg.norm(a - b))


@dataclass(frozen=True)
class CentroidSet:
    """Per-class mean embeddings plus the class sizes they were built from."""

    centroids: np.ndarray  # (class_count, dim)
    counts: np.ndarray  # (class_count,)

    @property
    def class_count(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]


def build_centroids(points, labels, class_count):
    """Arithmetic mean embedding of every class 0..class_count-1.

    Raises ValueError naming the class if any class has no examples.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    if points.ndim != 2 or len(points) != len(labels):
        raise ValueError("points must be (n, dim) with one label per row")
    centroids = np.empty((class_count, points.shape[1]))
    counts = np.zeros(class_count, dtype=np.int64)
    for j in range(class_count):
        members = points[labels == j]
        if len(members) == 0:
            raise ValueError(f"class {j} has no examples; cannot build its centroid")
        centroids[j] = members.mean(axis=0)
        counts[j] = len(members)
    return CentroidSet(centroids=centroids, counts=counts)


def nearest_centroid(cs, q):
    """Class index of the centroid nearest to q and its distance.

    Exact distance ties resolve to the lowest class index.
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (cs.dim,):
        raise ValueError(f"query has shape {q.shape}, centroids have dim {cs.dim}")
    d = np.linalg.norm(cs.centroids - q, axis=1)
    j = int(np.argmin(d))
    return j, float(d[j])


class KdIndex:
    """Balanced k-d tree over labeled embeddings, for exact k-NN queries.

    Construction cycles the split axis with depth and splits at the median
    element; coordinate ties fall back to insertion order, so the structure
    and every query result are fully deterministic. Queries always agree
    with an exhaustive scan.
    """

    def __init__(self, points, labels):
        points = np.ascontiguousarray(points, dtype=float)
        labels = np.asarray(labels, dtype=int)
        if points.ndim != 2 or len(points) == 0:
            raise ValueError("index needs a nonempty (n, dim) point array")
        if len(labels) != len(points):
            raise ValueError("points and labels length mismatch")
        if not np.all(np.isfinite(points)):
            raise ValueError("points must be finite")
        self.points = points
        self.labels = labels
        n = len(points)
        self._axis = np.zeros(n, dtype=np.int32)
        self._left = np.full(n, -1, dtype=np.int32)
        self._right = np.full(n, -1, dtype=np.int32)
        self._root = self._build(np.arange(n), 0)

    def __len__(self):
        return len(self.points)

    @property
    def dim(self):
        return self.points.shape[1]

    def _build(self, idx, depth):
        if len(idx) == 0:
            return -1
        axis = depth % self.dim
        # sort by (coordinate, original index): deterministic median under ties
        idx = idx[np.lexsort((idx, self.points[idx, axis]))]
        m = len(idx) // 2
        node = int(idx[m])
        self._axis[node] = axis
        self._left[node] = self._build(idx[:m], depth + 1)
        self._right[node] = self._build(idx[m + 1 :], depth + 1)
        return node


def build_index(points, labels):
    """Build a KdIndex over the given embeddings and labels."""
    return KdIndex(points, labels)


def knn(index, q, k):
    """The k nearest stored points to q, ascending by distance.

    Returns (distances, indices) into index.points / index.labels. Exact
    distance ties are broken by insertion order. Raises ValueError when k
    is outside [1, len(index)].
    """
    q = np.asarray(q, dtype=float)
    if q.shape != (index.dim,):
        raise ValueError(f"query has shape {q.shape}, index has dim {index.dim}")
    if not 1 <= k <= len(index):
        raise ValueError(f"k={k} outside [1, {len(index)}]")

    pts = index.points
    axis = index._axis
    left = index._left
    right = index._right
    # max-heap of the k best candidates as (-sqdist, -node); heap[0] is the
    # current worst, and tuple comparison encodes the insertion-order tie rule
    heap: list[tuple[float, int]] = []

    def visit(node):
        if node == -1:
            return
        p = pts[node]
        diff = q - p
        sd = float(diff @ diff)
        entry = (-sd, -node)
        if len(heap) < k:
            heappush(heap, entry)
        elif entry > heap[0]:
            heapreplace(heap, entry)
        ax = axis[node]
        delta = float(q[ax] - p[ax])
        near, far = (left[node], right[node]) if delta <= 0 else (right[node], left[node])
        visit(near)
        # equality kept: an equal-distance point beyond the plane can still
        # win its tie on insertion order
        if len(heap) < k or delta * delta <= -heap[0][0]:
            visit(far)

    visit(index._root)
    best = sorted(heap, reverse=True)
    dists = np.sqrt(np.array([-e[0] for e in best]))
    ids = np.array([-e[1] for e in best], dtype=np.int64)
    return dists, ids


def silhouette(points, labels):
    """Mean silhouette coefficient of the labeled point set, in [-1, 1].

    Per point: s = (b - a) / max(a, b) with a the mean distance to the other
    members of its own class and b the smallest mean distance to any other
    class. Points in singleton classes contribute 0.
    """
    points = np.asarray(points, dtype=float)
    labels = np.asarray(labels, dtype=int)
    n = len(points)
    classes = np.unique(labels)
    if n < 2 or len(classes) < 2:
        raise ValueError("silhouette needs at least 2 points across at least 2 classes")

    sq = (points**2).sum(axis=1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (points @ points.T)
    np.maximum(d2, 0.0, out=d2)
    dmat = np.sqrt(d2)
    np.fill_diagonal(dmat, 0.0)

    masks = {int(c): labels == c for c in classes}
    scores = np.zeros(n)
    for i in range(n):
        own = int(labels[i])
        n_own = int(masks[own].sum())
        if n_own == 1:
            continue
        a = dmat[i, masks[own]].sum() / (n_own - 1)
        b = min(dmat[i, m].mean() for c, m in masks.items() if c != own)
        denom = max(a, b)
        if denom > 0:
            scores[i] = (b - a) / denom
    return float(scores.mean())
