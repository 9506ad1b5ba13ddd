"""Inductive Venn prediction core.

Calibration examples are counted per (category, class) once, offline. At
prediction time an input is assigned to a category and each class j gets
the probability interval

    lower = n_j / (N + 1),    upper = (n_j + 1) / (N + 1)

where n_j is the calibration count of class j in that category and N the
category total: the empirical class frequency under the two hypothetical
completions of the category by the new example. Every interval in one
prediction has width exactly 1 / (N + 1). The predicted class maximizes the
interval midpoint.

A prediction landing in a category no calibration example reached gets the
vacuous interval [0, 1] for every class and is flagged as such rather than
rejected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ivenn.taxonomy import Taxonomy, TaxonomyConfig, TaxonomyKind, category_count

_TABLE_FORMAT = "ivenn-calibration-table-v1"


@dataclass(frozen=True)
class CalibrationTable:
    """Per-category, per-class counts of calibration examples."""

    counts: np.ndarray  # (category_count, class_count) int64
    config: TaxonomyConfig

    @property
    def class_count(self):
        return self.counts.shape[1]

    @property
    def category_count(self):
        return self.counts.shape[0]

    @property
    def totals(self):
        return self.counts.sum(axis=1)


@dataclass(frozen=True)
class IvpPrediction:
    predicted_class: int
    category: int
    lower: np.ndarray  # per class
    upper: np.ndarray  # per class
    mean: np.ndarray  # interval midpoints, the decision statistic
    empty_category: bool  # True when no calibration example reached the category


def calibrate(taxonomy, labels, embeddings=None, softmaxes=None):
    """Place every calibration example into its category and count classes.

    The result is independent of input order.
    """
    labels = np.asarray(labels, dtype=int)
    c = taxonomy.config.class_count
    if len(labels) and (labels.min() < 0 or labels.max() >= c):
        raise ValueError(f"labels must lie in [0, {c})")
    counts = np.zeros((taxonomy.category_count, c), dtype=np.int64)
    if len(labels):
        cats = taxonomy.assign_many(embeddings=embeddings, softmaxes=softmaxes)
        np.add.at(counts, (cats, labels), 1)
    return CalibrationTable(counts=counts, config=taxonomy.config)


def intervals(table, category):
    """Per-class probability interval for one category as (lower, upper)."""
    if not 0 <= category < table.category_count:
        raise ValueError(f"category {category} outside [0, {table.category_count})")
    n_j = table.counts[category]
    total = int(n_j.sum())
    lower = n_j / (total + 1)
    upper = (n_j + 1) / (total + 1)
    return lower, upper


def predict(table, taxonomy, embedding=None, softmax=None):
    """Assign the example to a category and emit its per-class intervals.

    The predicted class is the argmax of the interval midpoints, ties to the
    lowest class index. Raises ValueError when the taxonomy does not match
    the one the table was calibrated with.
    """
    cfg = table.config
    tcfg = taxonomy.config
    if tcfg.kind is not cfg.kind or tcfg.class_count != cfg.class_count:
        raise ValueError(
            f"taxonomy {tcfg.kind.value}/{tcfg.class_count} does not match "
            f"table {cfg.kind.value}/{cfg.class_count}"
        )
    category = int(taxonomy.assign(embedding=embedding, softmax=softmax))
    if not 0 <= category < table.category_count:
        raise ValueError(
            f"category {category} out of range for the table's "
            f"{table.category_count} categories; configuration mismatch"
        )
    lower, upper = intervals(table, category)
    mean = (lower + upper) / 2.0
    return IvpPrediction(
        predicted_class=int(np.argmax(mean)),
        category=category,
        lower=lower,
        upper=upper,
        mean=mean,
        empty_category=bool(table.totals[category] == 0),
    )


def save_table(table, path):
    """Write the table as text: the taxonomy configuration followed by one
    (category, class, count) triple per nonzero cell. Round-trip exact."""
    cfg = table.config
    lines = [f"# {_TABLE_FORMAT}"]
    lines.append(f"kind = {cfg.kind.value}")
    lines.append(f"class_count = {cfg.class_count}")
    lines.append(f"k = {cfg.k}")
    lines.append(f"theta = {'none' if cfg.theta is None else repr(cfg.theta)}")
    lines.append(f"max_output_threshold = {cfg.max_output_threshold!r}")
    lines.append(f"second_output_threshold = {cfg.second_output_threshold!r}")
    lines.append(f"output_gap_threshold = {cfg.output_gap_threshold!r}")
    lines.append("counts:")
    for cat, cls in zip(*np.nonzero(table.counts)):
        lines.append(f"{cat} {cls} {table.counts[cat, cls]}")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(lines) + "\n")


def load_table(path):
    """Read a table written by save_table."""
    with open(path, encoding="utf-8") as f:
        lines = [ln.rstrip("\n") for ln in f]
    if not lines or lines[0] != f"# {_TABLE_FORMAT}":
        raise ValueError(f"{path}: not a {_TABLE_FORMAT} file")
    fields = {}
    triples = []
    in_counts = False
    for ln in lines[1:]:
        if not ln.strip():
            continue
        if ln.strip() == "counts:":
            in_counts = True
            continue
        if in_counts:
            cat, cls, cnt = ln.split()
            triples.append((int(cat), int(cls), int(cnt)))
        else:
            key, _, value = ln.partition("=")
            fields[key.strip()] = value.strip()
    theta = fields["theta"]
    cfg = TaxonomyConfig(
        kind=TaxonomyKind(fields["kind"]),
        class_count=int(fields["class_count"]),
        k=int(fields["k"]),
        theta=None if theta == "none" else float(theta),
        max_output_threshold=float(fields["max_output_threshold"]),
        second_output_threshold=float(fields["second_output_threshold"]),
        output_gap_threshold=float(fields["output_gap_threshold"]),
    )
    counts = np.zeros((category_count(cfg), cfg.class_count), dtype=np.int64)
    for cat, cls, cnt in triples:
        counts[cat, cls] = cnt
    return CalibrationTable(counts=counts, config=cfg)
