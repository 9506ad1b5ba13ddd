"""Evaluation metrics for interval-valued classifiers.

A test-set run is an ordered list of EvalRecord (prediction + truth). From
it we compute cumulative error/error-probability curves, accuracy, negative
log-likelihood, Brier score, mean interval diameter, and expected/maximum
calibration error, and assemble everything into one report.

The per-example probability estimate o_i^j is the interval midpoint for
class j; the confidence of a prediction is the midpoint of its predicted
class. Cumulative lower/upper error probabilities accumulate 1 - U(yhat)
and 1 - L(yhat): when the predictor is well calibrated these bracket the
cumulative error count.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ivenn.ivp import IvpPrediction

# Floor for probabilities entering log; midpoints never reach 1 for a
# nonempty category, so no upper guard is needed.
_LOG_EPS = 1e-12

_REPORT_FORMAT = "ivenn-report-v1"


@dataclass(frozen=True)
class EvalRecord:
    prediction: IvpPrediction
    true_label: int

    @property
    def err(self):
        return 0 if self.prediction.predicted_class == self.true_label else 1

    @property
    def confidence(self):
        return float(self.prediction.mean[self.prediction.predicted_class])


@dataclass(frozen=True)
class CumulativeCurves:
    """Running sums in prediction order: errors, lower and upper error
    probabilities. LEP <= E-expectation <= UEP holds only in aggregate; the
    structural guarantees are monotonicity and LEP <= UEP pointwise."""

    E: np.ndarray
    LEP: np.ndarray
    UEP: np.ndarray


@dataclass(frozen=True)
class BinStat:
    bin_index: int
    count: int
    accuracy: float
    confidence: float


@dataclass(frozen=True)
class CalibrationReport:
    n: int
    accuracy: float
    nll_sum: float
    nll_mean: float
    brier: float
    diameter: float
    ece: float
    mce: float
    empty_category_count: int
    curves: CumulativeCurves
    bin_stats: tuple


def cumulative(records):
    """Running sums of errors and of 1-U(yhat), 1-L(yhat), in input order."""
    if not records:
        raise ValueError("need at least one record")
    errs = np.array([r.err for r in records], dtype=float)
    yhat = [r.prediction.predicted_class for r in records]
    lep_inc = np.array([1.0 - r.prediction.upper[j] for r, j in zip(records, yhat)])
    uep_inc = np.array([1.0 - r.prediction.lower[j] for r, j in zip(records, yhat)])
    return CumulativeCurves(
        E=np.cumsum(errs), LEP=np.cumsum(lep_inc), UEP=np.cumsum(uep_inc)
    )


def accuracy(records):
    if not records:
        raise ValueError("need at least one record")
    return 1.0 - sum(r.err for r in records) / len(records)


def nll(records):
    """Summed negative log-likelihood of the true class under the interval
    midpoints. The report derives the mean from this."""
    if not records:
        raise ValueError("need at least one record")
    total = 0.0
    for r in records:
        o_true = float(r.prediction.mean[r.true_label])
        total -= math.log(max(o_true, _LOG_EPS))
    return total


def brier(records):
    """Mean over samples of the squared error between the midpoint vector
    and the one-hot truth, summed over classes."""
    if not records:
        raise ValueError("need at least one record")
    total = 0.0
    for r in records:
        o = r.prediction.mean
        t = np.zeros_like(o)
        t[r.true_label] = 1.0
        total += float(((o - t) ** 2).sum())
    return total / len(records)


def diameter(records):
    """Mean interval width at the predicted class."""
    if not records:
        raise ValueError("need at least one record")
    widths = [
        float(r.prediction.upper[j] - r.prediction.lower[j])
        for r, j in ((r, r.prediction.predicted_class) for r in records)
    ]
    return float(np.mean(widths))


def _bin_index(conf, bins):
    # Right-inclusive equal-width bins on [0, 1]: bin m covers (m/M, (m+1)/M].
    return min(max(math.ceil(conf * bins) - 1, 0), bins - 1)


def ece_mce(records, bins=10):
    """Expected and maximum calibration error over equal-width confidence
    bins, plus the per-bin stats. Empty bins do not contribute."""
    if not records:
        raise ValueError("need at least one record")
    if bins < 1:
        raise ValueError("bins must be >= 1")
    hits = np.zeros(bins, dtype=np.int64)
    counts = np.zeros(bins, dtype=np.int64)
    conf_sums = np.zeros(bins)
    for r in records:
        m = _bin_index(r.confidence, bins)
        counts[m] += 1
        hits[m] += 1 - r.err
        conf_sums[m] += r.confidence
    n = len(records)
    ece = 0.0
    mce = 0.0
    stats = []
    for m in range(bins):
        if counts[m] == 0:
            continue
        acc_m = float(hits[m] / counts[m])
        conf_m = float(conf_sums[m] / counts[m])
        gap = abs(acc_m - conf_m)
        ece += int(counts[m]) / n * gap
        mce = max(mce, gap)
        stats.append(
            BinStat(
                bin_index=m,
                count=int(counts[m]),
                accuracy=float(acc_m),
                confidence=float(conf_m),
            )
        )
    return ece, mce, tuple(stats)


def build_report(records, bins=10):
    if not records:
        raise ValueError("need at least one record")
    curves = cumulative(records)
    ece, mce, stats = ece_mce(records, bins)
    total_nll = nll(records)
    n = len(records)
    return CalibrationReport(
        n=n,
        accuracy=accuracy(records),
        nll_sum=total_nll,
        nll_mean=total_nll / n,
        brier=brier(records),
        diameter=diameter(records),
        ece=ece,
        mce=mce,
        empty_category_count=sum(1 for r in records if r.prediction.empty_category),
        curves=curves,
        bin_stats=stats,
    )


def report_text(report):
    """One metric per line; floats via repr so equal runs serialize to
    identical bytes."""
    lines = [f"# {_REPORT_FORMAT}"]
    lines.append(f"n = {report.n}")
    lines.append(f"accuracy = {report.accuracy!r}")
    lines.append(f"errors = {int(report.curves.E[-1])}")
    lines.append(f"nll_sum = {report.nll_sum!r}")
    lines.append(f"nll_mean = {report.nll_mean!r}")
    lines.append(f"brier = {report.brier!r}")
    lines.append(f"diameter = {report.diameter!r}")
    lines.append(f"ece = {report.ece!r}")
    lines.append(f"mce = {report.mce!r}")
    lines.append(f"empty_categories = {report.empty_category_count}")
    lines.append(f"final_E = {float(report.curves.E[-1])!r}")
    lines.append(f"final_LEP = {float(report.curves.LEP[-1])!r}")
    lines.append(f"final_UEP = {float(report.curves.UEP[-1])!r}")
    lines.append("bins:")
    lines.append("bin count accuracy confidence")
    for b in report.bin_stats:
        lines.append(f"{b.bin_index} {b.count} {b.accuracy!r} {b.confidence!r}")
    return "\n".join(lines) + "\n"


def curves_csv(curves):
    """Cumulative curves as CSV with columns n, E, LEP, UEP."""
    lines = ["n,E,LEP,UEP"]
    for i in range(len(curves.E)):
        lines.append(
            f"{i + 1},{float(curves.E[i])!r},"
            f"{float(curves.LEP[i])!r},{float(curves.UEP[i])!r}"
        )
    return "\n".join(lines) + "\n"
