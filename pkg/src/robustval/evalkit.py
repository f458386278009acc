"""Evaluation metrics and application pipelines for value vectors:
rank correlation, cross-run consistency, mislabel detection, and
value-weighted training.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import rankdata

from .datasets import TabularDataset
from .errors import InvalidParam, LengthMismatch
from .seeding import stable_hash
from .training import TrainerConfig, accuracy, train


@dataclass(frozen=True)
class RankReport:
    spearman: float
    n: int
    degenerate: bool = False
    tie_policy: str = "average_rank"

    def to_dict(self) -> dict:
        return {
            "spearman": self.spearman,
            "n": self.n,
            "degenerate": self.degenerate,
            "tie_policy": self.tie_policy,
        }


def spearman(values_a: Sequence[float], values_b: Sequence[float]) -> RankReport:
    """Spearman rank correlation with average ranks for ties.

    A constant input has no rank ordering; the report carries 0 with the
    ``degenerate`` flag rather than NaN.
    """
    a = np.asarray(values_a, dtype=float)
    b = np.asarray(values_b, dtype=float)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"shapes {a.shape} and {b.shape} do not match")
    if a.size < 2:
        raise LengthMismatch("need at least two values to correlate ranks")
    ra, rb = rankdata(a), rankdata(b)
    var_a, var_b = ra.var(), rb.var()
    if var_a == 0.0 or var_b == 0.0:
        return RankReport(spearman=0.0, n=a.size, degenerate=True)
    cov = float(np.mean((ra - ra.mean()) * (rb - rb.mean())))
    rho = cov / math.sqrt(var_a * var_b)
    return RankReport(spearman=float(np.clip(rho, -1.0, 1.0)), n=a.size)


def _side_set(values: np.ndarray, count: int, side: str) -> frozenset[int]:
    order = np.lexsort((np.arange(values.size), -values if side == "top" else values))
    return frozenset(int(i) for i in order[:count])


def topk_consistency(
    value_runs: Sequence[Sequence[float]], k_percent: float, side: str = "top"
) -> float:
    """Fraction of the k% extreme set ranked there consistently in all runs.

    ``|intersection of per-run side-k% sets| / ceil(k% * n)``; ties broken
    deterministically by index.
    """
    if side not in ("top", "bottom"):
        raise InvalidParam(f"side must be 'top' or 'bottom', got {side!r}")
    if not 0 < k_percent <= 100:
        raise InvalidParam(f"k_percent must be in (0, 100], got {k_percent}")
    runs = [np.asarray(r, dtype=float) for r in value_runs]
    if len(runs) < 2:
        raise InvalidParam("need at least two runs to measure consistency")
    n = runs[0].size
    if any(r.size != n for r in runs):
        raise LengthMismatch("all runs must have the same length")
    count = math.ceil(k_percent * n / 100.0)
    common: frozenset[int] | None = None
    for run in runs:
        side_set = _side_set(run, count, side)
        common = side_set if common is None else (common & side_set)
    return len(common) / count


@dataclass(frozen=True)
class DetectionReport:
    threshold_percentile: float
    threshold_value: float
    predicted: tuple[int, ...]
    f1: float
    precision: float
    recall: float
    empty_truth: bool = False

    def to_dict(self) -> dict:
        return {
            "threshold_percentile": self.threshold_percentile,
            "threshold_value": self.threshold_value,
            "predicted": list(self.predicted),
            "f1": self.f1,
            "precision": self.precision,
            "recall": self.recall,
            "empty_truth": self.empty_truth,
        }


def nearest_rank_percentile(values: Sequence[float], percentile: float) -> float:
    """The value at rank ceil(p/100 * N) of the ascending order statistics."""
    arr = np.sort(np.asarray(values, dtype=float))
    if arr.size == 0:
        raise InvalidParam("percentile of an empty vector is undefined")
    rank = max(1, math.ceil(percentile / 100.0 * arr.size))
    return float(arr[rank - 1])


def mislabel_detect(
    values: Sequence[float],
    ground_truth: Iterable[int],
    percentile: float = 10.0,
) -> DetectionReport:
    """Flag low-value points as mislabeled and score against ground truth.

    Points whose value does not exceed the nearest-rank ``percentile``
    threshold are predicted mislabeled; with 10% true flips holding the 10%
    lowest values this recovers them exactly (F1 = 1).  An empty truth set
    yields F1 = 0 with the ``empty_truth`` flag.
    """
    arr = np.asarray(values, dtype=float)
    if arr.size < 1:
        raise InvalidParam("need at least one value")
    if not 0 < percentile < 100:
        raise InvalidParam(f"percentile must be in (0, 100), got {percentile}")
    truth = frozenset(int(i) for i in ground_truth)
    if any(not 0 <= i < arr.size for i in truth):
        raise InvalidParam("ground-truth indices outside the value vector")
    threshold = nearest_rank_percentile(arr, percentile)
    predicted = tuple(int(i) for i in np.flatnonzero(arr <= threshold))
    if not truth:
        return DetectionReport(
            threshold_percentile=percentile,
            threshold_value=threshold,
            predicted=predicted,
            f1=0.0,
            precision=0.0,
            recall=0.0,
            empty_truth=True,
        )
    hit = len(truth.intersection(predicted))
    precision = hit / len(predicted) if predicted else 0.0
    recall = hit / len(truth)
    f1 = 2 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return DetectionReport(
        threshold_percentile=percentile,
        threshold_value=threshold,
        predicted=predicted,
        f1=f1,
        precision=precision,
        recall=recall,
    )


@dataclass(frozen=True)
class WeightedTrainingReport:
    mean_accuracy: float
    stderr: float
    per_trial: tuple[float, ...]
    uniform_fallback: bool

    def to_dict(self) -> dict:
        return {
            "mean_accuracy": self.mean_accuracy,
            "stderr": self.stderr,
            "per_trial": list(self.per_trial),
            "uniform_fallback": self.uniform_fallback,
        }


def weighted_sample_training(
    values: Sequence[float],
    dataset: TabularDataset,
    validation: TabularDataset,
    config: TrainerConfig,
    trials: int,
    *,
    seed: int = 0,
) -> WeightedTrainingReport:
    """Train with per-epoch Bernoulli inclusion weighted by the values.

    Values are min-max normalized to [0, 1] and used as each row's inclusion
    probability, redrawn every epoch.  All-equal values degenerate to
    uniform weights (probability 1, flagged).  Returns held-out accuracy
    mean and standard error over independent seeded trials.
    """
    vals = np.asarray(values, dtype=float)
    if vals.shape != (dataset.n_points,):
        raise LengthMismatch(
            f"{vals.size} values for a dataset of {dataset.n_points} rows"
        )
    if trials < 1:
        raise InvalidParam(f"trials must be >= 1, got {trials}")
    lo, hi = float(vals.min()), float(vals.max())
    uniform = math.isclose(lo, hi, rel_tol=0.0, abs_tol=1e-15)
    weights = np.ones_like(vals) if uniform else (vals - lo) / (hi - lo)

    scores = []
    for t in range(trials):
        rng = np.random.default_rng(stable_hash("weighted-training", seed, t))
        params = train(config, dataset, rng=rng, inclusion_probs=weights)
        scores.append(
            accuracy(params, validation.features, validation.labels, config.model)
        )
    arr = np.asarray(scores)
    stderr = float(arr.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return WeightedTrainingReport(
        mean_accuracy=float(arr.mean()),
        stderr=stderr,
        per_trial=tuple(float(s) for s in arr),
        uniform_fallback=uniform,
    )
