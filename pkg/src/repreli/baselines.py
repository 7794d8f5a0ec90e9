"""Baseline reliability scores computed from representations alone."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ParameterError, PolarityError, ShapeError
from .tensor import Ensemble, Metric, as_metric, distances_to, l2_norm, pairwise_variance


class Polarity(str, enum.Enum):
    HIGHER_IS_RELIABLE = "higher"
    LOWER_IS_RELIABLE = "lower"

    @property
    def sign(self) -> float:
        return 1.0 if self is Polarity.HIGHER_IS_RELIABLE else -1.0


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    polarity: Polarity
    name: str = field(default="score", compare=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if v.ndim != 1:
            raise ShapeError(f"score vector must be 1-D, got shape {v.shape}")
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "polarity", Polarity(self.polarity))

    def __len__(self) -> int:
        return len(self.values)

    def oriented(self) -> np.ndarray:
        """Values flipped so that larger always means more reliable."""
        return self.polarity.sign * self.values


def dist_k_score(test, refs: np.ndarray, k: int = 1, metric=Metric.EUCLIDEAN) -> float:
    """Mean of the ``k`` smallest distances from ``test`` to the reference rows."""
    n = refs.shape[0]
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    if k > n:
        raise ParameterError(f"k={k} exceeds the {n} reference rows")
    d = distances_to(test, refs, as_metric(metric))
    return float(np.mean(np.sort(np.partition(d, k - 1)[:k])))


def norm_score(test) -> float:
    return l2_norm(test)


def feature_variance(ens: Ensemble, test_row: int) -> float:
    ens.require_members(2)
    return pairwise_variance(np.stack([t[test_row] for t in ens.tests]))


def dist_k_member(refs: np.ndarray, tests: np.ndarray, k: int = 1, metric=Metric.EUCLIDEAN) -> ScoreVector:
    vals = [dist_k_score(x, refs, k, metric) for x in tests]
    return ScoreVector(np.array(vals), Polarity.LOWER_IS_RELIABLE, f"dist_{k}")


def norm_member(tests: np.ndarray) -> ScoreVector:
    return ScoreVector(np.linalg.norm(tests, axis=1), Polarity.HIGHER_IS_RELIABLE, "norm")


def ensemble_average(per_member: Sequence[ScoreVector]) -> ScoreVector:
    if not per_member:
        raise ParameterError("no score vectors to average")
    pol = per_member[0].polarity
    if any(s.polarity is not pol for s in per_member):
        raise PolarityError("cannot average scores of mixed polarity")
    n = len(per_member[0])
    if any(len(s) != n for s in per_member):
        raise ShapeError("score vectors differ in length")
    vals = np.mean(np.stack([s.values for s in per_member]), axis=0)
    return ScoreVector(vals, pol, per_member[0].name)


def dist_k_batch(ens: Ensemble, k: int = 1, metric=Metric.EUCLIDEAN) -> ScoreVector:
    return ensemble_average([dist_k_member(r, t, k, metric) for r, t in zip(ens.refs, ens.tests)])


def norm_batch(ens: Ensemble) -> ScoreVector:
    """Ensemble-averaged norm; pass the unnormalized ensemble."""
    return ensemble_average([norm_member(t) for t in ens.tests])


def feature_variance_batch(ens: Ensemble) -> ScoreVector:
    ens.require_members(2)
    vals = [feature_variance(ens, j) for j in range(ens.n_test)]
    return ScoreVector(np.array(vals), Polarity.LOWER_IS_RELIABLE, "fv")
