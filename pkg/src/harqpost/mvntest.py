"""Multivariate normality tests: Mardia, Henze-Zirkler and Royston.

All functions take a ``(d, n)`` record matrix and standardize with the
maximum-likelihood covariance (divisor ``n``).
"""

from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .numerics import SingularMatrixError, chi2_sf, cholesky_spd, normal_ppf, normal_sf
from .report import DegenerateDataError, TestReport

TEST1_NAMES = ("Mardia-skew", "Mardia-kurt", "HZ", "Royston")
ROYSTON_MAX_N = 5000


def _standardize(X):
    """Whitened, centered records ``Z`` with ``Z Z^T / n = I``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DegenerateDataError("expected a 2-D record matrix")
    d, n = X.shape
    if n <= d:
        raise DegenerateDataError(f"need more records than dimensions (n={n}, d={d})")
    centered = X - X.mean(axis=1, keepdims=True)
    S = centered @ centered.T / n
    try:
        fac = cholesky_spd(0.5 * (S + S.T))
    except SingularMatrixError as exc:
        raise DegenerateDataError("sample covariance is singular") from exc
    return fac.whiten(centered)


def mardia_moments(Z):
    """Mardia's ``(b1, b2)`` from standardized records.

    ``b1 = n^-2 sum_ij (z_i . z_j)^3`` equals the squared Frobenius norm of the
    third-moment tensor, which avoids forming the ``n x n`` Gram matrix.
    """
    d, n = Z.shape
    b1 = 0.0
    for a in range(d):
        t = (Z[a] * Z) @ Z.T / n
        b1 += float(np.sum(t * t))
    q = np.sum(Z * Z, axis=0)
    b2 = float(np.mean(q * q))
    return b1, b2


def mardia(X, alpha: float = 0.01):
    """Mardia skewness (chi-squared) and kurtosis (two-sided normal) tests."""
    Z = _standardize(X)
    d, n = Z.shape
    b1, b2 = mardia_moments(Z)
    skew_stat = n * b1 / 6.0
    skew_dof = d * (d + 1) * (d + 2) // 6
    skew = TestReport("Mardia-skew", skew_stat, skew_dof, chi2_sf(max(skew_stat, 0.0), skew_dof), alpha)
    kurt_stat = (b2 - d * (d + 2)) / math.sqrt(8.0 * d * (d + 2) / n)
    kurt = TestReport("Mardia-kurt", kurt_stat, None, min(1.0, 2.0 * normal_sf(abs(kurt_stat))), alpha)
    return skew, kurt


def hz_smoothing(d: int, n: int) -> float:
    return ((2 * d + 1) * n / 4.0) ** (1.0 / (d + 4)) / math.sqrt(2.0)


def hz_lognormal_params(d: int, n: int):
    """Mean and variance of the HZ statistic under normality, and the
    matching lognormal ``(mu, sigma)``.

        a    = 1 + 2 b^2
        wb   = (1 + b^2)(1 + 3 b^2)
        mean = 1 - a^(-d/2) (1 + d b^2 / a + d (d+2) b^4 / (2 a^2))
        var  = 2 (1 + 4 b^2)^(-d/2)
               + 2 a^(-d) (1 + 2 d b^4 / a^2 + 3 d (d+2) b^8 / (4 a^4))
               - 4 wb^(-d/2) (1 + 3 d b^4 / (2 wb) + d (d+2) b^8 / (2 wb^2))
        mu    = ln(sqrt(mean^4 / (var + mean^2)))
        sigma = sqrt(ln((var + mean^2) / mean^2))
    """
    b = hz_smoothing(d, n)
    b2, b4, b8 = b**2, b**4, b**8
    a = 1 + 2 * b2
    wb = (1 + b2) * (1 + 3 * b2)
    mean = 1 - a ** (-d / 2) * (1 + d * b2 / a + d * (d + 2) * b4 / (2 * a**2))
    var = (
        2 * (1 + 4 * b2) ** (-d / 2)
        + 2 * a ** (-d) * (1 + 2 * d * b4 / a**2 + 3 * d * (d + 2) * b8 / (4 * a**4))
        - 4 * wb ** (-d / 2) * (1 + 3 * d * b4 / (2 * wb) + d * (d + 2) * b8 / (2 * wb**2))
    )
    mu = math.log(math.sqrt(mean**4 / (var + mean**2)))
    sigma = math.sqrt(math.log((var + mean**2) / mean**2))
    return mean, var, mu, sigma


def hz_statistic(Z, chunk: int = 256) -> float:
    d, n = Z.shape
    b = hz_smoothing(d, n)
    q = np.sum(Z * Z, axis=0)
    pair = 0.0
    # the pair kernel is symmetric: visit each block at or right of the diagonal once
    for lo in range(0, n, chunk):
        hi = min(lo + chunk, n)
        G = Z[:, lo:hi].T @ Z[:, lo:]
        G *= 2.0
        G -= q[None, lo:]
        G -= q[lo:hi, None]
        np.minimum(G, 0.0, out=G)  # -|z_i - z_j|^2
        G *= 0.5 * b * b
        np.exp(G, out=G)
        pair += float(G[:, : hi - lo].sum()) + 2.0 * float(G[:, hi - lo :].sum())
    single = float(np.exp(-(b * b) / (2 * (1 + b * b)) * q).sum())
    return n * (
        pair / n**2
        - 2.0 * (1 + b * b) ** (-d / 2) * single / n
        + (1 + 2 * b * b) ** (-d / 2)
    )


def henze_zirkler(X, alpha: float = 0.01) -> TestReport:
    """Henze-Zirkler test with the lognormal approximation of its null law."""
    Z = _standardize(X)
    d, n = Z.shape
    hz = hz_statistic(Z)
    _, _, mu, sigma = hz_lognormal_params(d, n)
    p = 1.0 if hz <= 0 else normal_sf((math.log(hz) - mu) / sigma)
    return TestReport("HZ", hz, None, p, alpha)


def royston_z(w: float, n: int) -> float:
    """Normal equivalent of a Shapiro-Wilk W (Royston's transformation)."""
    w = min(w, 1.0 - 1e-16)
    if n <= 11:
        g = -2.273 + 0.459 * n
        mu = 0.544 - 0.39978 * n + 0.025054 * n**2 - 0.0006714 * n**3
        sigma = math.exp(1.3822 - 0.77857 * n + 0.062767 * n**2 - 0.0020322 * n**3)
        return (-math.log(g - math.log1p(-w)) - mu) / sigma
    u = math.log(n)
    mu = -1.5861 - 0.31082 * u - 0.083751 * u**2 + 0.0038915 * u**3
    sigma = math.exp(-0.4803 - 0.082676 * u + 0.0030302 * u**2)
    return (math.log1p(-w) - mu) / sigma


def royston_edf(C, n: int) -> float:
    """Equivalent degrees of freedom from the correlation matrix ``C``."""
    d = C.shape[0]
    if d == 1:
        return 1.0
    u = 0.715
    ln = math.log(n)
    v = 0.21364 + 0.015124 * ln**2 - 0.0018034 * ln**3
    lam = 5
    Cc = np.clip(C, -1.0, 1.0)
    nc = Cc**lam * (1.0 - u * (1.0 - Cc) ** u / v)
    mean_c = (nc.sum() - d) / (d * d - d)
    return d / (1.0 + (d - 1) * mean_c)


def royston(X, alpha: float = 0.01, seed: int = 0) -> TestReport:
    """Royston's combination of per-coordinate Shapiro-Wilk tests.

    The Shapiro-Wilk approximation holds for ``n <= 5000``; larger datasets
    are reduced to a seeded random subset of 5000 records and the report
    says so.
    """
    X = np.asarray(X, dtype=float)
    d, n = X.shape
    if n < 3:
        raise DegenerateDataError(f"Royston's test needs n >= 3, got {n}")
    notes = ()
    if n > ROYSTON_MAX_N:
        keep = np.sort(np.random.default_rng(seed).choice(n, ROYSTON_MAX_N, replace=False))
        X = X[:, keep]
        notes = (f"subsampled {ROYSTON_MAX_N} of {n} records",)
        n = ROYSTON_MAX_N
    if np.any(np.ptp(X, axis=1) == 0):
        raise DegenerateDataError("a coordinate is constant")
    z = np.array([royston_z(float(stats.shapiro(row).statistic), n) for row in X])
    res = normal_ppf(normal_sf(z) / 2.0) ** 2
    edf = royston_edf(np.corrcoef(X), n)
    H = edf * float(res.sum()) / d
    return TestReport("Royston", H, edf, chi2_sf(H, edf), alpha, notes)


def test1_suite(dataset, alpha: float = 0.01, seed: int = 0):
    """Mardia-skew, Mardia-kurt, HZ and Royston reports, in that order."""
    X = dataset.X if hasattr(dataset, "X") else np.asarray(dataset)
    skew, kurt = mardia(X, alpha)
    return [skew, kurt, henze_zirkler(X, alpha), royston(X, alpha, seed)]


test1_suite.__test__ = False
