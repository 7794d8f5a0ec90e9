"""Exact brute-force neighbor queries against a reference matrix.

Ties in distance are broken by ascending reference index so that neighbor
sets, and every score built on them, are deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .tensor import Metric, as_metric, distances_to


@dataclass(frozen=True)
class NeighborSet:
    indices: np.ndarray
    param: float
    truncated: bool = False

    def __len__(self) -> int:
        return len(self.indices)

    def as_set(self) -> frozenset:
        return frozenset(int(i) for i in self.indices)


def smallest_k(dist: np.ndarray, k: int) -> np.ndarray:
    """Indices of the ``k`` smallest entries, ordered by (distance, index)."""
    n = dist.shape[0]
    if k >= n:
        return np.lexsort((np.arange(n), dist))
    # every index tied with the k-th value is a candidate; lexsort settles ties
    kth = np.partition(dist, k - 1)[k - 1]
    cand = np.flatnonzero(dist <= kth)
    order = np.lexsort((cand, dist[cand]))
    return cand[order[:k]]


def knn_indices(test, refs: np.ndarray, k: int, metric=Metric.EUCLIDEAN) -> NeighborSet:
    if int(k) != k or k < 1:
        raise ParameterError(f"k must be a positive integer, got {k!r}")
    k = int(k)
    dist = distances_to(test, refs, as_metric(metric))
    n = dist.shape[0]
    return NeighborSet(smallest_k(dist, k), k, truncated=k > n)


def eps_neighbors(test, refs: np.ndarray, eps: float, metric=Metric.EUCLIDEAN) -> NeighborSet:
    if not eps >= 0:
        raise ParameterError(f"eps must be non-negative, got {eps!r}")
    dist = distances_to(test, refs, as_metric(metric))
    idx = np.flatnonzero(dist <= eps)
    return NeighborSet(idx[np.lexsort((idx, dist[idx]))], float(eps))
