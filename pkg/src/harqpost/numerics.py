"""Linear-algebra and distribution kernels shared by the statistical modules.

Data matrices follow the column-record convention: ``X`` has shape ``(d, n)``
with one record per column.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import special


class DimensionError(ValueError):
    """Raised when an input matrix has an unusable shape."""


class InsufficientDataError(ValueError):
    """Raised when there are too few records for the requested statistic."""


class SingularMatrixError(ArithmeticError):
    """Raised when a matrix expected to be positive definite is not."""


@dataclass(frozen=True)
class SpdFactorization:
    """Cholesky factor of a symmetric positive definite matrix."""

    lower: np.ndarray
    log_det: float

    @property
    def dimension(self) -> int:
        return self.lower.shape[0]

    def solve(self, b: np.ndarray) -> np.ndarray:
        """Solve ``A x = b`` using the stored factor."""
        from scipy.linalg import cho_solve

        return cho_solve((self.lower, True), b)

    def whiten(self, b: np.ndarray) -> np.ndarray:
        """Return ``L^{-1} b``, so that ``|L^{-1} b|^2 = b^T A^{-1} b``."""
        from scipy.linalg import solve_triangular

        return solve_triangular(self.lower, b, lower=True)


def _as_matrix(X) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or X.shape[0] == 0 or X.shape[1] == 0:
        raise DimensionError(f"expected a non-empty 2-D matrix, got shape {X.shape}")
    return X


def sample_mean(X) -> np.ndarray:
    """Per-row arithmetic mean of a ``(d, n)`` record matrix."""
    X = _as_matrix(X)
    return X.mean(axis=1)


def sample_covariance_ml(X) -> np.ndarray:
    """Maximum-likelihood covariance (divisor ``n``) of a ``(d, n)`` record matrix."""
    X = _as_matrix(X)
    n = X.shape[1]
    if n < 2:
        raise InsufficientDataError(f"covariance needs at least 2 records, got {n}")
    centered = X - X.mean(axis=1, keepdims=True)
    cov = centered @ centered.T / n
    # exact symmetry; the product above can differ in the last ulp
    return 0.5 * (cov + cov.T)


def cholesky_spd(A) -> SpdFactorization:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise SingularMatrixError("matrix has non-finite entries")
    try:
        lower = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError("matrix is not positive definite") from exc
    diag = np.diag(lower)
    if np.any(diag <= 0) or not np.all(np.isfinite(diag)):
        raise SingularMatrixError("matrix is not positive definite")
    return SpdFactorization(lower=lower, log_det=2.0 * float(np.sum(np.log(diag))))


def log_det_spd(A) -> float:
    """``ln det A`` for symmetric positive definite ``A`` via its Cholesky factor."""
    return cholesky_spd(A).log_det


def chi2_sf(x, dof):
    """Survival function of the chi-squared law, ``P(chi2_dof > x)``.

    Evaluated as the regularized upper incomplete gamma function
    ``Q(dof/2, x/2)``. Accepts scalars or arrays for ``x``.
    """
    if dof < 1:
        raise ValueError(f"dof must be >= 1, got {dof}")
    xa = np.asarray(x, dtype=float)
    if np.any(xa < 0) or np.any(np.isnan(xa)):
        raise ValueError("chi2_sf is defined for x >= 0")
    out = special.gammaincc(0.5 * dof, 0.5 * xa)
    return float(out) if out.ndim == 0 else out


def normal_sf(x):
    """Upper tail of the standard normal law, ``P(N(0,1) > x)``."""
    if np.ndim(x) == 0:
        return 0.5 * math.erfc(float(x) / math.sqrt(2.0))
    return 0.5 * special.erfc(np.asarray(x, dtype=float) / np.sqrt(2.0))


def normal_ppf(p):
    """Inverse of the standard normal CDF."""
    return special.ndtri(p)
