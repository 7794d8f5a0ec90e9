"""Neighborhood consistency of test points across an ensemble.

For each member the test point's neighborhood among the reference rows is
computed in that member's own representation space; the score is the
pairwise set similarity of those index sets, summed over member pairs and
weighted by ``1 / M**2``. Its largest attainable value is therefore
``(M - 1) / (2 M)``. Pass ``normalized=True`` to divide by the number of
pairs instead, which maps the score onto ``[0, 1]``.
"""

from __future__ import annotations

import enum
from itertools import combinations

import numpy as np

from .knn import NeighborSet, eps_neighbors, knn_indices, smallest_k
from .tensor import Ensemble, Metric, as_metric, distances_to
from .errors import EnsembleTooSmall, InvalidInput


class SetSimilarity(str, enum.Enum):
    JACCARD = "jaccard"
    OVERLAP = "overlap"


def as_similarity(s) -> SetSimilarity:
    if isinstance(s, SetSimilarity):
        return s
    try:
        return SetSimilarity(str(s).lower())
    except ValueError:
        raise InvalidInput(f"unknown set similarity {s!r}") from None


def _indices(s) -> np.ndarray:
    if isinstance(s, NeighborSet):
        s = s.indices
    return np.unique(np.asarray(list(s) if isinstance(s, (set, frozenset)) else s, dtype=np.int64))


def set_similarity(s1, s2, sim=SetSimilarity.JACCARD) -> float:
    """Jaccard or overlap similarity of two index sets.

    Two empty sets count as identical (1.0); an empty set against a
    non-empty one scores 0.0 under both measures.
    """
    a, b = _indices(s1), _indices(s2)
    return _similarity_from_counts(
        len(np.intersect1d(a, b, assume_unique=True)), len(a), len(b), as_similarity(sim)
    )


def _similarity_from_counts(inter: int, na: int, nb: int, sim: SetSimilarity) -> float:
    if na == 0 and nb == 0:
        return 1.0
    if sim is SetSimilarity.JACCARD:
        return inter / (na + nb - inter)
    small = min(na, nb)
    return 0.0 if small == 0 else inter / small


def _pair_weight(m: int, normalized: bool) -> float:
    return 1.0 / (m * (m - 1) / 2) if normalized else 1.0 / m**2


def consistency_from_sets(sets, sim=SetSimilarity.JACCARD, normalized: bool = False) -> float:
    """Aggregate pairwise similarity over one neighbor set per member."""
    m = len(sets)
    if m < 2:
        raise EnsembleTooSmall(f"need at least 2 members, got {m}")
    sim = as_similarity(sim)
    total = sum(set_similarity(sets[i], sets[j], sim) for i, j in combinations(range(m), 2))
    return total * _pair_weight(m, normalized)


def max_consistency(m: int, normalized: bool = False) -> float:
    """Value reached when every member agrees on the neighborhood."""
    return 1.0 if normalized else (m - 1) / (2 * m)


def nc_k(
    ens: Ensemble,
    test_row: int,
    k: int = 100,
    metric=Metric.EUCLIDEAN,
    sim=SetSimilarity.JACCARD,
    normalized: bool = False,
) -> float:
    ens.require_members(2)
    sets = [knn_indices(t[test_row], r, k, metric) for r, t in zip(ens.refs, ens.tests)]
    return consistency_from_sets(sets, sim, normalized)


def nc_eps(
    ens: Ensemble,
    test_row: int,
    eps: float,
    metric=Metric.EUCLIDEAN,
    sim=SetSimilarity.JACCARD,
    normalized: bool = False,
) -> float:
    ens.require_members(2)
    sets = [eps_neighbors(t[test_row], r, eps, metric) for r, t in zip(ens.refs, ens.tests)]
    return consistency_from_sets(sets, sim, normalized)


def member_knn_table(ens: Ensemble, k: int, metric=Metric.EUCLIDEAN) -> np.ndarray:
    """Neighbor indices of every test row in every member, shape (M, n_test, min(k, n_ref))."""
    metric = as_metric(metric)
    kk = min(int(k), ens.n_ref)
    out = np.empty((ens.num_members, ens.n_test, kk), dtype=np.int64)
    for i, (refs, tests) in enumerate(zip(ens.refs, ens.tests)):
        for j in range(ens.n_test):
            out[i, j] = smallest_k(distances_to(tests[j], refs, metric), kk)
    return out


def nc_from_table(table: np.ndarray, sim=SetSimilarity.JACCARD, normalized: bool = False) -> np.ndarray:
    """Consistency scores from a precomputed ``member_knn_table``.

    A table built for a large ``k`` also serves every smaller ``k`` by
    slicing ``table[:, :, :k]``, since neighbor lists are prefix-ordered.
    """
    sim = as_similarity(sim)
    m, n_test, kk = table.shape
    if m < 2:
        raise EnsembleTooSmall(f"need at least 2 members, got {m}")
    scores = np.zeros(n_test)
    for j in range(n_test):
        rows = [np.sort(table[i, j]) for i in range(m)]
        total = 0.0
        for a, b in combinations(range(m), 2):
            inter = len(np.intersect1d(rows[a], rows[b], assume_unique=True))
            total += _similarity_from_counts(inter, kk, kk, sim)
        scores[j] = total
    return scores * _pair_weight(m, normalized)


def nc_k_batch(
    ens: Ensemble,
    k: int = 100,
    metric=Metric.EUCLIDEAN,
    sim=SetSimilarity.JACCARD,
    normalized: bool = False,
) -> np.ndarray:
    ens.require_members(2)
    return nc_from_table(member_knn_table(ens, k, metric), sim, normalized)


def nc_eps_batch(
    ens: Ensemble,
    eps: float,
    metric=Metric.EUCLIDEAN,
    sim=SetSimilarity.JACCARD,
    normalized: bool = False,
) -> np.ndarray:
    ens.require_members(2)
    return np.array([nc_eps(ens, j, eps, metric, sim, normalized) for j in range(ens.n_test)])
