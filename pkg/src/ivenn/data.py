"""Dataset container, CSV ingestion, deterministic splits, synthetic data.

The on-disk format is a single CSV with header

    id,label,f0,...,f{D-1}[,s0,...,s{c-1}]

where the optional s block carries an externally produced per-class score
vector (each row summing to 1) for score-threshold taxonomies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_SOFTMAX_TOL = 1e-6


@dataclass(frozen=True)
class Dataset:
    ids: np.ndarray  # (n,) int64
    features: np.ndarray  # (n, feature_dim) float64
    labels: np.ndarray  # (n,) int64, each in [0, class_count)
    class_count: int
    softmaxes: np.ndarray | None = None  # (n, class_count) rows summing to 1

    def __post_init__(self):
        n = len(self.ids)
        if self.features.shape[0] != n or self.labels.shape[0] != n:
            raise ValueError("ids, features and labels must have equal length")
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.class_count < 1:
            raise ValueError("class_count must be positive")
        if n and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise ValueError(f"labels must lie in [0, {self.class_count})")
        if self.softmaxes is not None:
            if self.softmaxes.shape != (n, self.class_count):
                raise ValueError(
                    f"softmaxes must have shape ({n}, {self.class_count})"
                )
            bad = np.abs(self.softmaxes.sum(axis=1) - 1.0) > _SOFTMAX_TOL
            if bad.any():
                raise ValueError(
                    f"softmax row {int(np.argmax(bad))} does not sum to 1"
                )

    def __len__(self):
        return len(self.ids)

    @property
    def feature_dim(self):
        return self.features.shape[1]

    def subset(self, indices):
        indices = np.asarray(indices, dtype=int)
        return Dataset(
            ids=self.ids[indices],
            features=self.features[indices],
            labels=self.labels[indices],
            class_count=self.class_count,
            softmaxes=None if self.softmaxes is None else self.softmaxes[indices],
        )


def _parse_header(header):
    cols = [c.strip() for c in header.split(",")]
    if len(cols) < 3 or cols[0] != "id" or cols[1] != "label":
        raise ValueError("header must start with 'id,label,f0,...'")
    dim = 0
    while 2 + dim < len(cols) and cols[2 + dim] == f"f{dim}":
        dim += 1
    if dim == 0:
        raise ValueError("header declares no feature columns")
    c = 0
    while 2 + dim + c < len(cols) and cols[2 + dim + c] == f"s{c}":
        c += 1
    if 2 + dim + c != len(cols):
        raise ValueError(f"unrecognized header column {cols[2 + dim + c]!r}")
    return dim, c


def load_csv(path, class_count=None):
    """Parse a dataset CSV. Malformed rows are rejected with their line
    number. When the file has no score block and class_count is not given,
    it is inferred as max(label) + 1."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    lines = [ln for ln in lines if ln.strip()]
    if not lines:
        raise ValueError(f"{path}: empty file")
    dim, softmax_count = _parse_header(lines[0])
    if softmax_count:
        if class_count is not None and class_count != softmax_count:
            raise ValueError(
                f"{path}: header has {softmax_count} score columns, "
                f"expected {class_count}"
            )
        class_count = softmax_count
    width = 2 + dim + softmax_count
    ids, labels = [], []
    features = np.empty((len(lines) - 1, dim))
    softmaxes = np.empty((len(lines) - 1, softmax_count)) if softmax_count else None
    for row, ln in enumerate(lines[1:]):
        lineno = row + 2
        cells = ln.split(",")
        if len(cells) != width:
            raise ValueError(
                f"{path}:{lineno}: expected {width} columns, got {len(cells)}"
            )
        try:
            ids.append(int(cells[0]))
            labels.append(int(cells[1]))
            features[row] = [float(v) for v in cells[2 : 2 + dim]]
            if softmax_count:
                softmaxes[row] = [float(v) for v in cells[2 + dim :]]
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: non-numeric cell ({exc})") from None
    labels = np.array(labels, dtype=np.int64)
    if class_count is None:
        class_count = int(labels.max()) + 1 if len(labels) else 1
    if len(labels) and (labels.min() < 0 or labels.max() >= class_count):
        bad = int(np.argmax((labels < 0) | (labels >= class_count)))
        raise ValueError(
            f"{path}:{bad + 2}: label {labels[bad]} outside [0, {class_count})"
        )
    return Dataset(
        ids=np.array(ids, dtype=np.int64),
        features=features,
        labels=labels,
        class_count=class_count,
        softmaxes=softmaxes,
    )


def save_csv(ds, path):
    """Inverse of load_csv; floats via repr so the round trip is exact."""
    cols = ["id", "label"] + [f"f{i}" for i in range(ds.feature_dim)]
    if ds.softmaxes is not None:
        cols += [f"s{j}" for j in range(ds.class_count)]
    lines = [",".join(cols)]
    for i in range(len(ds)):
        row = [str(int(ds.ids[i])), str(int(ds.labels[i]))]
        row += [repr(float(v)) for v in ds.features[i]]
        if ds.softmaxes is not None:
            row += [repr(float(v)) for v in ds.softmaxes[i]]
        lines.append(",".join(row))
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


@dataclass(frozen=True)
class SplitSpec:
    """Test examples come off the top, then a calibration share of what
    remains; fractional remainders stay in proper training."""

    test_fraction: float = 0.10
    calibration_fraction: float = 0.20
    seed: int = 0

    def validate(self):
        for name, v in (
            ("test_fraction", self.test_fraction),
            ("calibration_fraction", self.calibration_fraction),
        ):
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie in (0, 1), got {v}")


def split(ds, spec):
    """Deterministic (proper_training, calibration, test) partition.

    Raises when a part comes out empty or some class is missing from proper
    training, since the underlying model cannot learn an absent class.
    """
    spec.validate()
    n = len(ds)
    n_test = int(n * spec.test_fraction)
    n_cal = int((n - n_test) * spec.calibration_fraction)
    n_proper = n - n_test - n_cal
    if n_test == 0 or n_cal == 0 or n_proper == 0:
        raise ValueError(
            f"split of {n} examples leaves an empty part "
            f"(test={n_test}, calibration={n_cal}, proper={n_proper})"
        )
    perm = np.random.default_rng(spec.seed).permutation(n)
    test = ds.subset(perm[:n_test])
    calibration = ds.subset(perm[n_test : n_test + n_cal])
    proper = ds.subset(perm[n_test + n_cal :])
    present = np.unique(proper.labels)
    if len(present) != ds.class_count:
        missing = sorted(set(range(ds.class_count)) - set(int(c) for c in present))
        raise ValueError(
            f"classes {missing} missing from proper training; "
            f"try another seed or more data"
        )
    return proper, calibration, test


def synth_gaussians(class_count, dim, n_per_class, separation, seed):
    """Unit-variance isotropic Gaussian blobs, one per class, every pair of
    centers exactly `separation` apart (centers are scaled standard basis
    vectors, hence dim >= class_count)."""
    if class_count < 2:
        raise ValueError("need at least 2 classes")
    if n_per_class < 1:
        raise ValueError("n_per_class must be positive")
    if dim < class_count:
        raise ValueError(
            f"dim must be >= class_count to place {class_count} "
            f"equidistant centers, got dim={dim}"
        )
    if separation < 0:
        raise ValueError("separation must be nonnegative")
    rng = np.random.default_rng(seed)
    scale = separation / np.sqrt(2.0)
    n = class_count * n_per_class
    features = np.empty((n, dim))
    labels = np.empty(n, dtype=np.int64)
    for cls in range(class_count):
        center = np.zeros(dim)
        center[cls] = scale
        rows = slice(cls * n_per_class, (cls + 1) * n_per_class)
        features[rows] = center + rng.standard_normal((n_per_class, dim))
        labels[rows] = cls
    return Dataset(
        ids=np.arange(n, dtype=np.int64),
        features=features,
        labels=labels,
        class_count=class_count,
    )
