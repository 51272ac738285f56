"""Dense Gaussian algebra for a finite ARMA realisation.

The joint law of y_1..y_N under zero initial conditions is N(0, sigma2 G G^T)
where G = F^{-1} L, F and L being the unit lower-triangular banded Toeplitz
operators of the AR and MA polynomials. G is itself lower-triangular Toeplitz,
holding the impulse-response weights.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg

from .model import ArmaParams, ObservationRecord, psi_weights

LOG_2PI = math.log(2.0 * math.pi)

# Dense covariances beyond this dimension are refused (~200 MB of float64).
MAX_DENSE_DIM = 5000


class SingularCovarianceError(np.linalg.LinAlgError):
    def __init__(self, msg: str, condition: float = math.inf):
        super().__init__(f"{msg} (condition estimate {condition:.3e})")
        self.condition = condition


class ResourceError(MemoryError):
    pass


@dataclass(frozen=True)
class GaussianConditional:
    """Law of the missing block given the observed block."""

    mean: np.ndarray
    cov: np.ndarray
    log_det_cov: float

    @property
    def dim(self) -> int:
        return self.mean.size


def banded_toeplitz_operator(coeffs, n: int) -> np.ndarray:
    """Unit lower-triangular Toeplitz T with T[i, i-k] = coeffs[k-1]."""
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    col = np.zeros(n)
    col[0] = 1.0
    k = min(coeffs.size, n - 1)
    col[1:k + 1] = coeffs[:k]
    return linalg.toeplitz(col, np.zeros(n))


def joint_covariance(params: ArmaParams, n: int, max_dim: int = MAX_DENSE_DIM) -> np.ndarray:
    """Covariance of (y_1..y_n) for y solving F y = L e, e ~ N(0, sigma2 I)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > max_dim:
        raise ResourceError(f"dense covariance of dimension {n} exceeds limit {max_dim}")
    psi = psi_weights(params, n)
    # Sigma[i, i+d] = sigma2 * sum_{s<=i} psi_s psi_{s+d}: a running sum along each diagonal
    sigma = np.empty((n, n))
    rows = np.arange(n)
    for d in range(n):
        diag = params.sigma2 * np.cumsum(psi[:n - d] * psi[d:])
        sigma[rows[:n - d], rows[d:]] = diag
        sigma[rows[d:], rows[:n - d]] = diag
    return sigma


def _cholesky(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return linalg.cholesky(mat, lower=True, check_finite=False)
    except linalg.LinAlgError:
        try:
            cond = float(np.linalg.cond(mat))
        except np.linalg.LinAlgError:
            cond = math.inf
        raise SingularCovarianceError(f"{what} is not positive definite", cond) from None


def _logdet_from_chol(chol: np.ndarray) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(chol))))


def _gauss_logpdf_chol(resid: np.ndarray, chol: np.ndarray) -> float:
    z = linalg.solve_triangular(chol, resid, lower=True, check_finite=False)
    return -0.5 * (resid.size * LOG_2PI + _logdet_from_chol(chol) + float(z @ z))


def condition_and_loglik(sigma: np.ndarray, observed_idx, missing_idx, y_obs
                         ) -> tuple[GaussianConditional, float]:
    """Condition the missing block on the observed one.

    Also returns log N(y_obs; 0, sigma_oo), which falls out of the same
    Cholesky factor.
    """
    oi = np.asarray(observed_idx, dtype=np.intp)
    mi = np.asarray(missing_idx, dtype=np.intp)
    y_obs = np.asarray(y_obs, dtype=float)
    s_mm = sigma[np.ix_(mi, mi)]
    if oi.size == 0:
        chol_c = _cholesky(s_mm, "Sigma_mm") if mi.size else np.zeros((0, 0))
        return GaussianConditional(np.zeros(mi.size), s_mm, _logdet_from_chol(chol_c)), 0.0
    s_oo = sigma[np.ix_(oi, oi)]
    s_om = sigma[np.ix_(oi, mi)]
    chol = _cholesky(s_oo, "Sigma_oo")
    loglik = _gauss_logpdf_chol(y_obs, chol)
    w = linalg.solve_triangular(chol, s_om, lower=True, check_finite=False)
    z = linalg.solve_triangular(chol, y_obs, lower=True, check_finite=False)
    mean = w.T @ z
    cov = s_mm - w.T @ w
    cov = 0.5 * (cov + cov.T)
    log_det = _logdet_from_chol(_cholesky(cov, "conditional covariance")) if mi.size else 0.0
    return GaussianConditional(mean, cov, log_det), loglik


def condition_gaussian(sigma: np.ndarray, observed_idx, missing_idx, y_obs) -> GaussianConditional:
    """Mean and covariance of y_m given y_o for y ~ N(0, sigma)."""
    return condition_and_loglik(sigma, observed_idx, missing_idx, y_obs)[0]


def mvn_logpdf(x, mean, cov) -> float:
    x = np.atleast_1d(np.asarray(x, dtype=float))
    mean = np.atleast_1d(np.asarray(mean, dtype=float))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    if not (x.shape == mean.shape and cov.shape == (x.size, x.size)):
        raise ValueError("dimension mismatch in mvn_logpdf")
    return _gauss_logpdf_chol(x - mean, _cholesky(cov, "covariance"))


def observed_loglik_dense(params: ArmaParams, rec: ObservationRecord) -> float:
    """Exact observed-data log-likelihood log N(y_o; 0, Sigma_oo)."""
    if rec.observed_idx.size == 0:
        raise ValueError("need at least one observed value")
    sigma = joint_covariance(params, rec.n)
    s_oo = sigma[np.ix_(rec.observed_idx, rec.observed_idx)]
    return _gauss_logpdf_chol(rec.observed_values, _cholesky(s_oo, "Sigma_oo"))
