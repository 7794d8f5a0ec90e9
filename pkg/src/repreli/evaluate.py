"""Kendall rank correlation between reliability scores and ground truth."""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .baselines import ScoreVector
from .downstream import ReliabilityVector
from .errors import ParameterError, ShapeError, UndefinedCorrelation


def _tie_pairs(sorted_vals: np.ndarray) -> int:
    """Number of tied pairs in an already sorted array."""
    if sorted_vals.size == 0:
        return 0
    change = np.flatnonzero(np.diff(sorted_vals) != 0)
    runs = np.diff(np.concatenate(([0], change + 1, [sorted_vals.size])))
    return int(np.sum(runs * (runs - 1) // 2))


def _count_inversions(a: list) -> int:
    """Strict inversions (i < j, a[i] > a[j]) by bottom-up merge sort; sorts ``a`` in place."""
    n = len(a)
    buf = [0] * n
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i, j, k = lo, mid, lo
            while i < mid and j < hi:
                if a[j] < a[i]:
                    buf[k] = a[j]
                    inv += mid - i
                    j += 1
                else:
                    buf[k] = a[i]
                    i += 1
                k += 1
            buf[k:hi] = a[i:mid] + a[j:hi] if i < mid else a[j:hi]
            a[lo:hi] = buf[lo:hi]
        width *= 2
    return inv


def kendall_tau_b(x, y) -> float:
    """Tie-corrected Kendall tau in O(n log n) (Knight's algorithm)."""
    x = np.asarray(getattr(x, "values", x), dtype=np.float64)
    y = np.asarray(getattr(y, "values", y), dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"inputs must be 1-D of equal length, got {x.shape} and {y.shape}")
    n = x.shape[0]
    if n < 2:
        raise ParameterError("need at least 2 points")
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        raise ParameterError("inputs must be finite")

    n0 = n * (n - 1) // 2
    order = np.lexsort((y, x))
    xs, ys = x[order], y[order]
    ties_x = _tie_pairs(xs)
    # pairs tied in both x and y: runs of equal (x, y)
    both = np.concatenate(([True], (np.diff(xs) != 0) | (np.diff(ys) != 0)))
    runs = np.diff(np.concatenate((np.flatnonzero(both), [n])))
    ties_xy = int(np.sum(runs * (runs - 1) // 2))

    # ranks keep the comparisons integer and exact
    yr = rankdata(ys, method="dense").astype(np.int64).tolist()
    swaps = _count_inversions(yr)
    ties_y = _tie_pairs(np.sort(y))

    denom_x, denom_y = n0 - ties_x, n0 - ties_y
    if denom_x == 0 or denom_y == 0:
        raise UndefinedCorrelation("tau-b is undefined when either input is constant")
    numer = n0 - ties_x - ties_y + ties_xy - 2 * swaps
    tau = numer / math.sqrt(denom_x * denom_y)
    return min(1.0, max(-1.0, tau))


@dataclass(frozen=True)
class CorrelationReport:
    method: str
    tau: float
    n_points: int
    reli_metric: str
    config_digest: str = ""

    def as_row(self) -> dict:
        return {
            "method": self.method,
            "tau": repr(float(self.tau)),
            "n_points": str(self.n_points),
            "reli_metric": self.reli_metric,
            "config_digest": self.config_digest,
        }


def config_digest(config) -> str:
    return hashlib.sha256(repr(config).encode()).hexdigest()[:12]


def correlate(score: ScoreVector, reli: ReliabilityVector, method: str | None = None, config=None) -> CorrelationReport:
    """Tau-b between a polarity-adjusted score and ground-truth reliability."""
    if len(score) != len(reli):
        raise ShapeError(f"{len(score)} scores but {len(reli)} reliability values")
    metric = getattr(reli, "metric", "unknown")
    return CorrelationReport(
        method or score.name,
        kendall_tau_b(score.oriented(), reli.values),
        len(score),
        getattr(metric, "value", str(metric)),
        config_digest(config) if config is not None else "",
    )


@dataclass(frozen=True)
class ModelRanking:
    mean_reliability: np.ndarray
    mean_score: np.ndarray
    predicted_order: np.ndarray
    true_order: np.ndarray
    tau: float  # mean per-point tau
    tau_of_mean_ranks: float
    points_used: int


def rank_models(scores: Sequence[ScoreVector], relis: Sequence) -> ModelRanking:
    """Compare model rankings induced by a score and by ground-truth reliability.

    For every test point the models are ranked by score and by reliability
    and the two rankings are correlated; the headline ``tau`` is the mean
    over points where both rankings are defined. ``tau_of_mean_ranks``
    instead correlates each model's average rank under the two criteria.
    """
    if len(scores) < 2 or len(scores) != len(relis):
        raise ParameterError("need the same number (>= 2) of score and reliability vectors")
    s = np.stack([sc.oriented() if isinstance(sc, ScoreVector) else np.asarray(sc, float) for sc in scores])
    r = np.stack([np.asarray(getattr(rv, "values", rv), dtype=np.float64) for rv in relis])
    if s.shape != r.shape:
        raise ShapeError("score and reliability matrices differ in shape")
    taus = []
    for j in range(s.shape[1]):
        try:
            taus.append(kendall_tau_b(s[:, j], r[:, j]))
        except UndefinedCorrelation:
            continue
    if not taus:
        raise UndefinedCorrelation("model rankings are tied at every point")
    s_rank = np.mean([rankdata(s[:, j]) for j in range(s.shape[1])], axis=0)
    r_rank = np.mean([rankdata(r[:, j]) for j in range(r.shape[1])], axis=0)
    try:
        tau_means = kendall_tau_b(s_rank, r_rank)
    except UndefinedCorrelation:
        tau_means = float("nan")
    return ModelRanking(
        mean_reliability=r.mean(axis=1),
        mean_score=s.mean(axis=1),
        predicted_order=np.lexsort((np.arange(len(s_rank)), -s_rank)),
        true_order=np.lexsort((np.arange(len(r_rank)), -r_rank)),
        tau=float(np.mean(taus)),
        tau_of_mean_ranks=tau_means,
        points_used=len(taus),
    )
