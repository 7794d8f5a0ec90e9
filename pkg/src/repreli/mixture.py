"""Gaussian and von Mises-Fisher mixtures fitted by EM, and the LL score.

Gaussian components use diagonal covariances. vMF components live on the
unit sphere; their concentrations are the exact per-component maximum
likelihood solution of ``A_d(kappa) = r_bar`` started from Banerjee's
closed-form approximation, so every M-step is a true maximizer and the EM
trace stays monotone.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.special import logsumexp

from .baselines import Polarity, ScoreVector, ensemble_average
from .errors import InvalidInput, ParameterError, ShapeError
from .special import bessel_ratio, log_vmf_normalizer
from .tensor import as_embedding, as_vector

logger = logging.getLogger(__name__)

VAR_FLOOR = 1e-6
KAPPA_MAX = 1e4
UNIT_TOL = 1e-6
LOG_2PI = math.log(2.0 * math.pi)


@dataclass
class EmTrace:
    log_likelihoods: list = field(default_factory=list)
    converged: bool = False
    reseeds: list = field(default_factory=list)  # (iteration, component)

    @property
    def iterations(self) -> int:
        return len(self.log_likelihoods)

    def is_monotone(self, slack: float = 1e-7) -> bool:
        """Non-decreasing log-likelihood, ignoring steps right after a reseed."""
        skip = {it for it, _ in self.reseeds}
        ll = self.log_likelihoods
        return all(ll[i + 1] >= ll[i] - slack * max(1.0, abs(ll[i])) for i in range(len(ll) - 1) if i + 1 not in skip)


@dataclass(frozen=True)
class GaussianMixture:
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        """(n, C) matrix of log w_c + log N(x; mu_c, diag(var_c))."""
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], self.num_components))
        for c in range(self.num_components):
            diff = x - self.means[c]
            out[:, c] = -0.5 * (
                self.dim * LOG_2PI + np.sum(np.log(self.variances[c])) + np.sum(diff * diff / self.variances[c], axis=1)
            )
        with np.errstate(divide="ignore"):
            return out + np.log(self.weights)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_densities(x), axis=1)


@dataclass(frozen=True)
class VmfMixture:
    weights: np.ndarray
    directions: np.ndarray
    concentrations: np.ndarray

    @property
    def num_components(self) -> int:
        return self.weights.shape[0]

    @property
    def dim(self) -> int:
        return self.directions.shape[1]

    def component_log_densities(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        log_c = np.array([log_vmf_normalizer(self.dim, k) for k in self.concentrations])
        with np.errstate(divide="ignore"):
            return log_c + (x @ self.directions.T) * self.concentrations + np.log(self.weights)

    def log_density(self, x: np.ndarray) -> np.ndarray:
        return logsumexp(self.component_log_densities(x), axis=1)


def _check_unit_rows(x: np.ndarray) -> None:
    norms = np.linalg.norm(x, axis=1)
    if np.any(np.abs(norms - 1.0) > UNIT_TOL):
        bad = int(np.argmax(np.abs(norms - 1.0)))
        raise InvalidInput(f"row {bad} is not unit-norm (norm {norms[bad]:.6g})")


def _kmeanspp(x: np.ndarray, n_components: int, rng: np.random.Generator, cosine: bool) -> np.ndarray:
    n = x.shape[0]
    centers = [int(rng.integers(n))]
    for _ in range(1, n_components):
        c = x[centers]
        if cosine:
            d2 = np.min(2.0 - 2.0 * np.clip(x @ c.T, -1.0, 1.0), axis=1)
        else:
            d2 = np.min(((x[:, None, :] - c[None, :, :]) ** 2).sum(-1), axis=1)
        d2 = np.maximum(d2, 0.0)
        total = d2.sum()
        if total <= 0.0:
            centers.append(int(rng.integers(n)))
        else:
            centers.append(int(rng.choice(n, p=d2 / total)))
    return x[centers].copy()


def _converged(ll: list, tol: float) -> bool:
    return len(ll) >= 2 and abs(ll[-1] - ll[-2]) <= tol * max(abs(ll[-2]), 1e-300)


def _check_fit_args(x: np.ndarray, n_components: int, max_iter: int) -> None:
    if int(n_components) != n_components or n_components < 1:
        raise ParameterError(f"n_components must be a positive integer, got {n_components!r}")
    if x.shape[0] < n_components:
        raise ParameterError(f"{x.shape[0]} rows cannot support {n_components} components")
    if max_iter < 1:
        raise ParameterError("max_iter must be at least 1")


def fit_gmm(refs, n_components: int = 10, seed: int = 0, max_iter: int = 200, tol: float = 1e-6,
            var_floor: float = VAR_FLOOR):
    """Fit a diagonal-covariance Gaussian mixture by EM.

    Returns:
        (GaussianMixture, EmTrace)
    """
    x = as_embedding(refs, "refs")
    _check_fit_args(x, n_components, max_iter)
    n, d = x.shape
    rng = np.random.default_rng(seed)
    global_var = np.maximum(x.var(axis=0), var_floor)
    model = GaussianMixture(
        np.full(n_components, 1.0 / n_components),
        _kmeanspp(x, n_components, rng, cosine=False),
        np.tile(global_var, (n_components, 1)),
    )
    trace = EmTrace()
    for it in range(max_iter):
        logp = model.component_log_densities(x)
        norm = logsumexp(logp, axis=1)
        trace.log_likelihoods.append(float(norm.sum()))
        if _converged(trace.log_likelihoods, tol):
            trace.converged = True
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        means = np.empty((n_components, d))
        variances = np.empty((n_components, d))
        for c in range(n_components):
            if nk[c] < 1e-10 * n:
                # empty component: restart it on the worst-explained point
                far = int(np.argmin(norm))
                means[c] = x[far]
                variances[c] = global_var
                nk[c] = 1.0
                trace.reseeds.append((it + 1, c))
                logger.debug("gmm: reseeded component %d at iteration %d", c, it)
                continue
            means[c] = resp[:, c] @ x / nk[c]
            diff = x - means[c]
            variances[c] = np.maximum(resp[:, c] @ (diff * diff) / nk[c], var_floor)
        model = GaussianMixture(nk / nk.sum(), means, variances)
    return model, trace


def estimate_kappa(r_bar: float, dim: int, method: str = "mle", kappa_max: float = KAPPA_MAX) -> float:
    """Concentration for mean resultant length ``r_bar`` in dimension ``dim``.

    ``method="banerjee"`` returns r(d - r^2) / (1 - r^2); ``"mle"`` solves
    I_{d/2}(k) / I_{d/2-1}(k) = r_bar exactly, bracketed on [0, kappa_max].
    """
    r_bar = float(r_bar)
    if r_bar <= 0.0:
        return 0.0
    if r_bar >= 1.0 - 1e-9:
        return kappa_max
    approx = r_bar * (dim - r_bar**2) / (1.0 - r_bar**2)
    if method == "banerjee":
        return float(min(approx, kappa_max))
    if method != "mle":
        raise ParameterError(f"unknown kappa estimator {method!r}")
    nu = 0.5 * dim - 1.0

    def f(k):
        return bessel_ratio(nu, k) - r_bar

    if f(kappa_max) <= 0.0:
        return kappa_max
    lo, hi = 0.0, min(max(2.0 * approx, 1.0), kappa_max)
    while f(hi) < 0.0:
        lo, hi = hi, min(2.0 * hi, kappa_max)
    return float(brentq(f, lo, hi, xtol=1e-12, rtol=1e-13))


def fit_vmf_mixture(refs_normalized, n_components: int = 10, seed: int = 0, max_iter: int = 200,
                    tol: float = 1e-6, kappa_max: float = KAPPA_MAX, kappa_method: str = "mle"):
    """Fit a mixture of von Mises-Fisher distributions by soft-assignment EM.

    Rows must already be unit-norm.

    Returns:
        (VmfMixture, EmTrace)
    """
    x = as_embedding(refs_normalized, "refs")
    _check_unit_rows(x)
    _check_fit_args(x, n_components, max_iter)
    n, d = x.shape
    if d < 2:
        raise ShapeError("vMF mixtures need dimension >= 2")
    rng = np.random.default_rng(seed)
    r0 = np.linalg.norm(x.mean(axis=0))
    kappa0 = estimate_kappa(r0, d, kappa_method, kappa_max)
    model = VmfMixture(
        np.full(n_components, 1.0 / n_components),
        _kmeanspp(x, n_components, rng, cosine=True),
        np.full(n_components, kappa0),
    )
    trace = EmTrace()
    for it in range(max_iter):
        logp = model.component_log_densities(x)
        norm = logsumexp(logp, axis=1)
        trace.log_likelihoods.append(float(norm.sum()))
        if _converged(trace.log_likelihoods, tol):
            trace.converged = True
            break
        resp = np.exp(logp - norm[:, None])
        nk = resp.sum(axis=0)
        dirs = model.directions.copy()
        kappas = model.concentrations.copy()
        for c in range(n_components):
            if nk[c] < 1e-10 * n:
                far = int(np.argmin(norm))
                dirs[c] = x[far]
                kappas[c] = kappa0
                nk[c] = 1.0
                trace.reseeds.append((it + 1, c))
                logger.debug("vmf: reseeded component %d at iteration %d", c, it)
                continue
            s = resp[:, c] @ x
            length = np.linalg.norm(s)
            if length > 0.0:
                dirs[c] = s / length
            kappas[c] = estimate_kappa(min(length / nk[c], 1.0), d, kappa_method, kappa_max)
        model = VmfMixture(nk / nk.sum(), dirs, kappas)
    return model, trace


def gmm_log_density(g: GaussianMixture, x) -> float:
    x = as_vector(x)
    if x.shape[0] != g.dim:
        raise ShapeError(f"dimension {x.shape[0]} does not match mixture dimension {g.dim}")
    return float(g.log_density(x[None, :])[0])


def vmf_log_density(v: VmfMixture, x) -> float:
    x = as_vector(x)
    if x.shape[0] != v.dim:
        raise ShapeError(f"dimension {x.shape[0]} does not match mixture dimension {v.dim}")
    if abs(np.linalg.norm(x) - 1.0) > UNIT_TOL:
        raise InvalidInput("vMF density needs a unit-norm input")
    return float(v.log_density(x[None, :])[0])


def ll_score(model, x) -> float:
    """Log-likelihood of one representation under a fitted mixture (higher is more reliable)."""
    if isinstance(model, GaussianMixture):
        return gmm_log_density(model, x)
    if isinstance(model, VmfMixture):
        return vmf_log_density(model, x)
    raise InvalidInput(f"unsupported model type {type(model).__name__}")


def ll_batch(models, tests) -> ScoreVector:
    """Ensemble-averaged log-likelihood; ``models[i]`` was fitted on member i's references."""
    per = []
    for model, t in zip(models, tests):
        t = as_embedding(t, "tests")
        if isinstance(model, VmfMixture):
            _check_unit_rows(t)
        elif not isinstance(model, GaussianMixture):
            raise InvalidInput(f"unsupported model type {type(model).__name__}")
        per.append(ScoreVector(model.log_density(t), Polarity.HIGHER_IS_RELIABLE, "ll"))
    return ensemble_average(per)
