"""Log of the modified Bessel function of the first kind, I_nu(x).

Evaluated entirely in log space so that orders in the hundreds or
thousands (nu = d/2 - 1 for high-dimensional embeddings) do not overflow.

Branches:
  * power series, for x <= nu or any moderate order (all terms positive,
    no cancellation);
  * Debye uniform asymptotic expansion for large order with x > nu;
  * Hankel large-argument expansion for small order and very large x.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.special import gammaln

# orders at or above this use the uniform expansion when x > nu
DEBYE_MIN_ORDER = 50.0
HANKEL_MIN_ARG = 1e4
SERIES_TOL = 1e-16


def _series_log_sum(nu: float, x: float) -> float:
    """log of sum_m (x/2)^(2m) / (m! Gamma(m + nu + 1))."""
    if x == 0.0:
        return -float(gammaln(nu + 1.0))
    q = 0.25 * x * x
    # index of the largest term: m (m + nu) = q
    peak = 0.5 * (-nu + math.sqrt(nu * nu + 4.0 * q))
    n_terms = int(math.ceil(peak + 12.0 * math.sqrt(peak + 1.0) + 40.0))
    m = np.arange(1, n_terms, dtype=np.float64)
    log_ratio = math.log(q) - np.log(m) - np.log(m + nu)
    log_terms = np.concatenate(([0.0], np.cumsum(log_ratio))) - gammaln(nu + 1.0)
    top = log_terms.max()
    # terms below SERIES_TOL of the peak cannot change the sum
    tail = log_terms[log_terms >= top + math.log(SERIES_TOL) - 5.0]
    return float(top + math.log(np.sum(np.exp(tail - top))))


# Debye polynomials u_k(t), coefficients in ascending powers of t
_DEBYE_U = [
    np.array([1.0]),
    np.array([0, 3, 0, -5]) / 24.0,
    np.array([0, 0, 81, 0, -462, 0, 385]) / 1152.0,
    np.array([0, 0, 0, 30375, 0, -369603, 0, 765765, 0, -425425]) / 414720.0,
    np.array([0, 0, 0, 0, 4465125, 0, -94121676, 0, 349922430, 0, -446185740, 0, 185910725])
    / 39813120.0,
]


def _debye_log_iv(nu: float, x: float) -> float:
    z = x / nu
    root = math.sqrt(1.0 + z * z)
    t = 1.0 / root
    eta = root + math.log(z / (1.0 + root))
    corr = sum(np.polynomial.polynomial.polyval(t, u) / nu**k for k, u in enumerate(_DEBYE_U))
    return nu * eta - 0.5 * math.log(2.0 * math.pi * nu) - 0.5 * math.log(root) + math.log(corr)


def _hankel_log_iv(nu: float, x: float) -> float:
    mu = 4.0 * nu * nu
    term, total = 1.0, 1.0
    for k in range(1, 60):
        nxt = -term * (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(nxt) >= abs(term):
            break
        term = nxt
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return x - 0.5 * math.log(2.0 * math.pi * x) + math.log(total)


def _branch(nu: float, x: float) -> str:
    if nu >= DEBYE_MIN_ORDER and x > nu:
        return "debye"
    if x > HANKEL_MIN_ARG and x > 25.0 * nu * nu:
        return "hankel"
    return "series"


def log_iv(nu: float, x: float) -> float:
    """log I_nu(x) for nu >= 0, x >= 0 (returns -inf for I_nu(0) = 0)."""
    nu, x = float(nu), float(x)
    if nu < 0 or x < 0 or not (math.isfinite(nu) and math.isfinite(x)):
        raise ValueError(f"log_iv needs finite nu >= 0 and x >= 0, got nu={nu}, x={x}")
    if x == 0.0:
        return 0.0 if nu == 0.0 else -math.inf
    branch = _branch(nu, x)
    if branch == "debye":
        return _debye_log_iv(nu, x)
    if branch == "hankel":
        return _hankel_log_iv(nu, x)
    return nu * math.log(0.5 * x) + _series_log_sum(nu, x)


def bessel_ratio(nu: float, x: float) -> float:
    """I_{nu+1}(x) / I_nu(x), in [0, 1)."""
    if x == 0.0:
        return 0.0
    return math.exp(log_iv(nu + 1.0, x) - log_iv(nu, x))


def log_vmf_normalizer(dim: int, kappa: float) -> float:
    """log C_p(kappa) of the von Mises-Fisher density on the unit sphere in R^p.

    C_p(kappa) = kappa^(p/2-1) / ((2 pi)^(p/2) I_{p/2-1}(kappa)). At
    kappa = 0 this is the reciprocal surface area of the sphere.
    """
    p = int(dim)
    if p < 2:
        raise ValueError(f"vMF needs dimension >= 2, got {p}")
    nu = 0.5 * p - 1.0
    kappa = float(kappa)
    if kappa < 0:
        raise ValueError(f"kappa must be non-negative, got {kappa}")
    if _branch(nu, kappa) == "series":
        # kappa^nu cancels analytically against the series prefactor
        return nu * math.log(2.0) - 0.5 * p * math.log(2.0 * math.pi) - _series_log_sum(nu, kappa)
    return nu * math.log(kappa) - 0.5 * p * math.log(2.0 * math.pi) - log_iv(nu, kappa)
