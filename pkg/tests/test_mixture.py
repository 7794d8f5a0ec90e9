import math

import numpy as np
import pytest
from scipy import integrate
from scipy.stats import multivariate_normal

from repreli.errors import InvalidInput
from repreli.mixture import (
    GaussianMixture,
    estimate_kappa,
    fit_gmm,
    fit_vmf_mixture,
    gmm_log_density,
    ll_batch,
    ll_score,
    vmf_log_density,
)
from repreli.tensor import normalize_rows


def sample_vmf_d3(mu, kappa, n, rng):
    """Exact sampler on S^2 via the inverse CDF of w = mu . x."""
    u = rng.uniform(size=n)
    w = 1.0 + np.log(u + (1.0 - u) * np.exp(-2.0 * kappa)) / kappa
    phi = rng.uniform(0, 2 * np.pi, n)
    s = np.sqrt(np.clip(1 - w**2, 0, None))
    local = np.stack([s * np.cos(phi), s * np.sin(phi), w], axis=1)
    # rotate e3 onto mu
    q, _ = np.linalg.qr(np.column_stack([mu, np.eye(3)[:, :2]]))
    q = q[:, [1, 2, 0]] * np.sign(q[:, 0] @ mu)
    return local @ q.T


def blobs(rng, n=300, d=4, c=3):
    means = rng.standard_normal((c, d)) * 4
    lab = rng.integers(c, size=n)
    return means[lab] + rng.standard_normal((n, d))


def test_gmm_density_matches_scipy(rng):
    x = blobs(rng)
    g, _ = fit_gmm(x, 3, seed=0)
    pts = rng.standard_normal((5, 4))
    for p in pts:
        want = sum(w * multivariate_normal(m, np.diag(v)).pdf(p) for w, m, v in zip(g.weights, g.means, g.variances))
        assert gmm_log_density(g, p) == pytest.approx(math.log(want), rel=1e-10)


def test_gmm_density_integrates_to_one():
    g = GaussianMixture(np.array([0.3, 0.7]), np.array([[-1.0, 0.0], [2.0, 1.0]]), np.array([[0.5, 1.0], [1.5, 0.3]]))
    val, _ = integrate.dblquad(lambda y, x: math.exp(gmm_log_density(g, [x, y])), -12, 12, -12, 12, epsabs=1e-10)
    assert val == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(20))
def test_gmm_em_monotone(seed):
    rng = np.random.default_rng(seed)
    _, trace = fit_gmm(blobs(rng), 4, seed=seed)
    assert trace.is_monotone(1e-7)


@pytest.mark.parametrize("seed", range(20))
def test_vmf_em_monotone(seed):
    rng = np.random.default_rng(seed)
    x = normalize_rows(blobs(rng, d=5))
    _, trace = fit_vmf_mixture(x, 4, seed=seed)
    assert trace.is_monotone(1e-7)


def test_vmf_needs_unit_rows(rng):
    with pytest.raises(InvalidInput):
        fit_vmf_mixture(rng.standard_normal((20, 3)) * 3, 2)


def test_kappa_mle_against_grid():
    rng = np.random.default_rng(7)
    mu = np.array([0.0, 0.6, 0.8])
    x = sample_vmf_d3(mu, 10.0, 2000, rng)
    model, _ = fit_vmf_mixture(x, 1, seed=0)
    r = np.linalg.norm(x.sum(axis=0))
    grid = np.linspace(0.5, 40, 40_000)
    loglik = len(x) * (np.log(grid) - np.log(4 * np.pi) - grid - np.log1p(-np.exp(-2 * grid)) + np.log(2)) + grid * r
    oracle = grid[np.argmax(loglik)]
    kappa_hat = model.concentrations[0]
    assert abs(kappa_hat - oracle) / oracle < 0.15
    assert abs(kappa_hat - oracle) < 0.01  # exact MLE agrees to grid resolution
    assert abs(kappa_hat - 10.0) / 10.0 < 0.15


def test_kappa_estimators_agree_roughly():
    for r in (0.2, 0.6, 0.9):
        mle = estimate_kappa(r, 3)
        ban = estimate_kappa(r, 3, "banerjee")
        assert abs(mle - ban) / mle < 0.1
    assert estimate_kappa(0.0, 3) == 0.0


def test_vmf_density_on_sphere_normalized():
    rng = np.random.default_rng(3)
    x = sample_vmf_d3(np.array([0, 0, 1.0]), 4.0, 500, rng)
    model, _ = fit_vmf_mixture(x, 2, seed=1)
    # Monte Carlo: E_uniform[p(x)] * area = 1
    u = normalize_rows(rng.standard_normal((200_000, 3)))
    dens = np.exp(model.log_density(u))
    assert dens.mean() * 4 * np.pi == pytest.approx(1.0, abs=0.02)
    with pytest.raises(InvalidInput):
        vmf_log_density(model, [1.0, 1.0, 0.0])


def test_ll_batch_averages(rng):
    x = blobs(rng)
    models = [fit_gmm(x, 2, seed=s)[0] for s in range(2)]
    t = rng.standard_normal((4, 4))
    sv = ll_batch(models, [t, t])
    want = [np.mean([ll_score(m, row) for m in models]) for row in t]
    np.testing.assert_allclose(sv.values, want, rtol=1e-12)


def test_single_component_closed_form(rng):
    x = rng.standard_normal((100, 3)) * [1.0, 2.0, 0.5] + 4
    g, _ = fit_gmm(x, 1)
    np.testing.assert_allclose(g.means[0], x.mean(axis=0), rtol=1e-12)
    np.testing.assert_allclose(g.variances[0], x.var(axis=0), rtol=1e-10)


def test_separated_clusters(rng):
    a = rng.standard_normal((50, 2)) * 0.1
    b = rng.standard_normal((50, 2)) * 0.1 + 100
    g, _ = fit_gmm(np.vstack([a, b]), 2)
    got = sorted(map(tuple, g.means))
    np.testing.assert_allclose(got, sorted([tuple(a.mean(0)), tuple(b.mean(0))]), atol=1e-6)


def test_repeated_point_clamps_variance():
    g, _ = fit_gmm(np.ones((10, 2)), 1)
    np.testing.assert_allclose(g.variances, 1e-6)
    assert np.isfinite(gmm_log_density(g, [1.0, 1.0]))


def test_standard_normal_peak():
    g = GaussianMixture(np.array([1.0]), np.zeros((1, 1)), np.ones((1, 1)))
    assert gmm_log_density(g, [0.0]) == pytest.approx(-0.9189385332, abs=1e-9)
    assert gmm_log_density(g, [1.0]) == pytest.approx(-0.9189385332 - 0.5, abs=1e-9)


def test_vmf_examples(rng):
    from repreli.mixture import KAPPA_MAX, VmfMixture
    from repreli.special import log_vmf_normalizer
    u = np.array([0.0, 0.0, 1.0])
    m, _ = fit_vmf_mixture(np.tile(u, (20, 1)), 1)
    assert m.concentrations[0] == KAPPA_MAX
    np.testing.assert_allclose(m.directions[0], u)
    theta = rng.uniform(0, 2 * np.pi, 2000)
    circle = np.column_stack([np.cos(theta), np.sin(theta)])
    assert fit_vmf_mixture(circle, 1)[0].concentrations[0] < 0.5
    v = VmfMixture(np.array([1.0]), u[None], np.array([2.5]))
    assert vmf_log_density(v, [1.0, 0.0, 0.0]) == pytest.approx(log_vmf_normalizer(3, 2.5), abs=1e-14)
    assert vmf_log_density(VmfMixture(np.array([1.0]), u[None], np.array([0.0])), u) == pytest.approx(-2.5310242, abs=1e-7)


def test_ll_score_rejects_unnormalized(rng):
    x = normalize_rows(rng.standard_normal((30, 3)))
    v, _ = fit_vmf_mixture(x, 2)
    with pytest.raises(InvalidInput):
        ll_score(v, [2.0, 0.0, 0.0])
