"""Threshold-based point matching and detection metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .localization import DotMap


@dataclass(frozen=True)
class MatchingOutcome:
    """Matched (prediction, ground-truth) pairs within the distance threshold."""

    pairs: tuple[tuple[int, int, float], ...]
    tp: int
    fp: int
    fn: int
    threshold: float


@dataclass(frozen=True)
class MetricsReport:
    moda: float
    modp: float
    precision: float
    recall: float
    f1: float


def match_points(pred: DotMap, gt: DotMap, t: float = 0.5) -> MatchingOutcome:
    """Optimal assignment between predictions and ground truth.

    Among matchings restricted to pairs closer than ``t`` meters, picks one
    of maximum cardinality, and among those one of minimum total distance
    (pairs beyond the threshold carry a prohibitive cost in the assignment).
    """
    if not t > 0:
        raise ValueError(f"threshold must be positive, got {t}")
    np_, ng = pred.count, gt.count
    if np_ == 0 or ng == 0:
        return MatchingOutcome(pairs=(), tp=0, fp=np_, fn=ng, threshold=t)

    d = np.linalg.norm(pred.points[:, None, :] - gt.points[None, :, :], axis=2)
    # Any forbidden pair must cost more than every feasible matching combined,
    # so minimizing cost maximizes the number of feasible pairs first.
    big = t * (min(np_, ng) + 1.0) + 1.0
    cost = np.where(d <= t, d, big)
    rows, cols = linear_sum_assignment(cost)
    pairs = tuple(
        (int(i), int(j), float(d[i, j])) for i, j in zip(rows, cols) if d[i, j] <= t
    )
    tp = len(pairs)
    return MatchingOutcome(pairs=pairs, tp=tp, fp=np_ - tp, fn=ng - tp, threshold=t)


def compute_metrics(outcome: MatchingOutcome) -> MetricsReport:
    """Detection accuracy/precision metrics from a matching outcome.

    moda = 1 - (FP + FN) / (TP + FN); modp averages 1 - d/t over the matched
    pairs (0 when there are none). Precision, recall, and F1 follow the usual
    definitions with 0 substituted on empty denominators.
    """
    tp, fp, fn = outcome.tp, outcome.fp, outcome.fn
    if tp + fn == 0:
        raise ValueError("metrics are undefined for an empty ground truth")
    moda = 1.0 - (fp + fn) / (tp + fn)
    if tp > 0:
        modp = float(sum(1.0 - dist / outcome.threshold for _, _, dist in outcome.pairs)) / tp
    else:
        modp = 0.0
    precision = tp / (tp + fp) if tp + fp > 0 else 0.0
    recall = tp / (tp + fn)
    f1 = 2.0 * precision * recall / (precision + recall) if precision + recall > 0 else 0.0
    return MetricsReport(moda=moda, modp=modp, precision=precision, recall=recall, f1=f1)
