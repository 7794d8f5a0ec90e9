"""Dense vector primitives: norms, normalization and distances.

All routines work in float64. Embedding matrices are plain ``numpy`` arrays
of shape ``(n, d)``; :class:`Ensemble` bundles the per-member reference and
test matrices that share row indexing.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DegenerateVector, EnsembleTooSmall, InvalidInput, ShapeError

EPS_ZERO = 1e-12


class Metric(str, enum.Enum):
    EUCLIDEAN = "euclidean"
    COSINE = "cosine"


def as_metric(m) -> Metric:
    if isinstance(m, Metric):
        return m
    try:
        return Metric(str(m).lower())
    except ValueError:
        raise InvalidInput(f"unknown metric {m!r}") from None


def as_vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1:
        raise ShapeError(f"expected a 1-D vector, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise InvalidInput("vector has non-finite entries")
    return v


def as_embedding(x, name: str = "embedding") -> np.ndarray:
    """Validate and convert ``x`` to a finite float64 ``(rows, dim)`` matrix."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise ShapeError(f"{name}: expected a 2-D matrix, got shape {x.shape}")
    if x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"{name}: empty matrix of shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise InvalidInput(f"{name}: matrix has non-finite entries")
    return x


def l2_norm(v) -> float:
    v = as_vector(v)
    # scaled to avoid overflow for huge entries
    scale = np.max(np.abs(v)) if v.size else 0.0
    if scale == 0.0:
        return 0.0
    return float(scale * np.sqrt(np.sum((v / scale) ** 2)))


def l2_normalize(v) -> np.ndarray:
    v = as_vector(v)
    n = l2_norm(v)
    if n <= EPS_ZERO:
        raise DegenerateVector(f"cannot normalize vector with norm {n:.3g}")
    return v / n


def normalize_rows(x) -> np.ndarray:
    """Row-wise L2 normalization of a matrix."""
    x = as_embedding(x)
    norms = np.linalg.norm(x, axis=1)
    if np.any(norms <= EPS_ZERO):
        bad = int(np.flatnonzero(norms <= EPS_ZERO)[0])
        raise DegenerateVector(f"row {bad} has near-zero norm")
    return x / norms[:, None]


def distance(u, v, metric=Metric.EUCLIDEAN) -> float:
    u, v = as_vector(u), as_vector(v)
    if u.shape != v.shape:
        raise ShapeError(f"dimension mismatch: {u.shape[0]} vs {v.shape[0]}")
    metric = as_metric(metric)
    if metric is Metric.EUCLIDEAN:
        return l2_norm(u - v)
    nu, nv = l2_norm(u), l2_norm(v)
    if nu <= EPS_ZERO or nv <= EPS_ZERO:
        raise DegenerateVector("cosine distance undefined for a zero vector")
    cos = float(np.dot(u / nu, v / nv))
    return float(np.clip(1.0 - cos, 0.0, 2.0))


def distances_to(x, refs: np.ndarray, metric=Metric.EUCLIDEAN) -> np.ndarray:
    """Distances from one vector ``x`` to every row of ``refs``."""
    x = as_vector(x)
    if refs.ndim != 2 or refs.shape[1] != x.shape[0]:
        raise ShapeError(f"query dim {x.shape[0]} does not match reference shape {refs.shape}")
    metric = as_metric(metric)
    if metric is Metric.EUCLIDEAN:
        diff = refs - x
        return np.sqrt(np.einsum("ij,ij->i", diff, diff))
    nx = np.linalg.norm(x)
    nr = np.linalg.norm(refs, axis=1)
    if nx <= EPS_ZERO or np.any(nr <= EPS_ZERO):
        raise DegenerateVector("cosine distance undefined for a zero vector")
    cos = (refs @ x) / (nr * nx)
    return np.clip(1.0 - cos, 0.0, 2.0)


@dataclass(frozen=True)
class Ensemble:
    """M aligned (reference, test) embedding matrices.

    Row ``l`` of every reference matrix is the same underlying point, and
    likewise for test rows.
    """

    refs: tuple
    tests: tuple

    def __init__(self, refs: Sequence, tests: Sequence):
        refs = tuple(as_embedding(r, f"refs[{i}]") for i, r in enumerate(refs))
        tests = tuple(as_embedding(t, f"tests[{i}]") for i, t in enumerate(tests))
        if len(refs) != len(tests):
            raise ShapeError(f"{len(refs)} reference matrices but {len(tests)} test matrices")
        if not refs:
            raise EnsembleTooSmall("ensemble has no members")
        if any(r.shape != refs[0].shape for r in refs):
            raise ShapeError("reference matrices differ in shape across members")
        if any(t.shape != tests[0].shape for t in tests):
            raise ShapeError("test matrices differ in shape across members")
        if refs[0].shape[1] != tests[0].shape[1]:
            raise ShapeError("reference and test dimensions differ")
        object.__setattr__(self, "refs", refs)
        object.__setattr__(self, "tests", tests)

    @property
    def num_members(self) -> int:
        return len(self.refs)

    @property
    def n_ref(self) -> int:
        return self.refs[0].shape[0]

    @property
    def n_test(self) -> int:
        return self.tests[0].shape[0]

    @property
    def dim(self) -> int:
        return self.refs[0].shape[1]

    def require_members(self, m: int = 2) -> None:
        if self.num_members < m:
            raise EnsembleTooSmall(f"need at least {m} ensemble members, got {self.num_members}")

    def normalized(self) -> "Ensemble":
        return Ensemble([normalize_rows(r) for r in self.refs], [normalize_rows(t) for t in self.tests])

    def subset(self, members) -> "Ensemble":
        return Ensemble([self.refs[i] for i in members], [self.tests[i] for i in members])


def pairwise_variance(points) -> float:
    """Population variance of M vectors in pairwise form.

    Computes ``(1/M**2) * sum_{i<j} ||z_i - z_j||**2``, which equals the
    trace of the population covariance of the rows of ``points``.
    """
    z = np.asarray(points, dtype=np.float64)
    if z.ndim == 1:
        z = z[:, None]
    m = z.shape[0]
    if m < 2:
        raise EnsembleTooSmall(f"need at least 2 vectors, got {m}")
    total = 0.0
    for i in range(m - 1):
        diff = z[i + 1 :] - z[i]
        total += float(np.sum(diff * diff))
    return total / m**2
