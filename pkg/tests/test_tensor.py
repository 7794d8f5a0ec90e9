import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from repreli.errors import DegenerateVector, EnsembleTooSmall, InvalidInput, ShapeError
from repreli.tensor import (
    Ensemble,
    Metric,
    as_metric,
    distance,
    distances_to,
    l2_norm,
    l2_normalize,
    pairwise_variance,
)

finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_l2_norm_matches_numpy(rng):
    v = rng.standard_normal(17)
    assert l2_norm(v) == pytest.approx(np.linalg.norm(v), rel=1e-14)


def test_l2_norm_no_overflow():
    v = np.array([1e200, 1e200])
    assert l2_norm(v) == pytest.approx(np.sqrt(2) * 1e200)


def test_normalize_unit_and_degenerate():
    u = l2_normalize([3.0, 4.0])
    np.testing.assert_allclose(u, [0.6, 0.8])
    with pytest.raises(DegenerateVector):
        l2_normalize([0.0, 0.0])


def test_cosine_distance_range():
    assert distance([1, 0], [1, 0], "cosine") == pytest.approx(0.0)
    assert distance([1, 0], [-1, 0], "cosine") == pytest.approx(2.0)
    assert distance([1, 0], [0, 1], Metric.COSINE) == pytest.approx(1.0)


def test_distance_rejects_bad_inputs():
    with pytest.raises(ShapeError):
        distance([1, 2], [1, 2, 3])
    with pytest.raises(InvalidInput):
        distance([np.nan, 1], [1, 1])
    with pytest.raises(InvalidInput):
        as_metric("manhattan")


def test_distances_to_matches_loop(rng):
    refs = rng.standard_normal((30, 6))
    x = rng.standard_normal(6)
    for m in ("euclidean", "cosine"):
        expected = [distance(x, r, m) for r in refs]
        np.testing.assert_allclose(distances_to(x, refs, m), expected, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (3, 4), elements=finite), arrays(np.float64, (3, 4), elements=finite))
def test_metric_symmetry(a, b):
    for m in ("euclidean", "cosine"):
        for u, v in zip(a, b):
            if min(np.linalg.norm(u), np.linalg.norm(v)) <= 1e-12:
                continue
            assert distance(u, v, m) == pytest.approx(distance(v, u, m), abs=1e-12)
            assert distance(u, v, m) >= 0


def test_pairwise_variance_equals_trace_covariance(rng):
    pts = rng.standard_normal((6, 9))
    trace = np.trace(np.cov(pts.T, bias=True))
    assert pairwise_variance(pts) == pytest.approx(trace, rel=1e-12)


def test_pairwise_variance_needs_two():
    with pytest.raises(EnsembleTooSmall):
        pairwise_variance(np.ones((1, 3)))


def test_ensemble_validation(rng):
    r = rng.standard_normal((5, 3))
    t = rng.standard_normal((2, 3))
    ens = Ensemble([r, r], [t, t])
    assert (ens.num_members, ens.n_ref, ens.n_test, ens.dim) == (2, 5, 2, 3)
    with pytest.raises(ShapeError):
        Ensemble([r, r[:4]], [t, t])
    with pytest.raises(ShapeError):
        Ensemble([r], [t, t])
    with pytest.raises(EnsembleTooSmall):
        Ensemble([r], [t]).require_members(2)


def test_ensemble_normalized_rows(small_ens):
    n = small_ens.normalized()
    for x in n.refs + n.tests:
        np.testing.assert_allclose(np.linalg.norm(x, axis=1), 1.0)


def test_euclidean_examples_and_triangle(rng):
    assert distance([0, 0], [3, 4]) == 5.0
    for _ in range(200):
        a, b, c = rng.standard_normal((3, 4)) * rng.uniform(0.1, 10)
        assert distance(a, c) <= distance(a, b) + distance(b, c) + 1e-9
