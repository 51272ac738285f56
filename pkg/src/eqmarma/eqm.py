"""Equalisation Maximisation for ARMA models with missing samples.

Each iteration replaces the missing block by a deterministic point whose
conditional density under the current parameters equals the constant
(2 pi)^{-m/2} theta0^{-1/2}, then refits the model by complete-data maximum
likelihood.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg, optimize
from scipy.signal import lfilter

from .gauss import (GaussianConditional, condition_and_loglik, joint_covariance, mvn_logpdf,
                    observed_loglik_dense)
from .model import ArmaParams, ObservationRecord, _poly_from_roots, _trim, stability_margin
from .trace import EstimationTrace

# Roots of a projected polynomial are pushed to at least this modulus.
PROJECTION_MARGIN = 1.0 + 1e-3


class DegenerateConditionalError(ArithmeticError):
    pass


class SingularRegressionError(np.linalg.LinAlgError):
    pass


class DegenerateEstimateWarning(RuntimeWarning):
    pass


class ConvergenceWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class EqmConfig:
    """Run configuration.

    ``criterion`` selects the stopping rule: ``"param"`` stops when the
    2-norm of the parameter change (phi, lam, sigma2) is <= ``tol``,
    ``"loglik"`` when the observed log-likelihood changes by <= ``tol``, and
    ``"fixed"`` runs exactly ``max_iters`` iterations.
    """

    theta0: float = 1.0
    max_iters: int = 100
    criterion: str = "param"
    tol: float = 1e-6

    def __post_init__(self):
        if self.criterion not in ("param", "loglik", "fixed"):
            raise ValueError(f"unknown criterion {self.criterion!r}")
        if not self.theta0 > 0:
            raise ValueError("theta0 must be > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


def equalisation_estimate(cond: GaussianConditional, theta0: float = 1.0
                          ) -> tuple[np.ndarray, bool]:
    """Missing-data point estimate with a parameter-independent conditional density.

    Returns ``(y_hat, clamped)``. When log|Sigma| exceeds log(theta0) the
    square root has no real value; the radicand is clamped to zero, giving
    the conditional mean, and ``clamped`` is set.
    """
    if cond.dim == 0:
        return np.zeros(0), False
    if not theta0 > 0:
        raise ValueError("theta0 must be > 0")
    s11 = cond.cov[0, 0]
    if not s11 > 0:
        raise DegenerateConditionalError(f"first conditional variance is {s11}")
    radicand = (math.log(theta0) - cond.log_det_cov) / s11
    clamped = radicand < 0
    return cond.mean + cond.cov[0, :] * math.sqrt(max(radicand, 0.0)), bool(clamped)


def project_polynomial(coeffs) -> np.ndarray:
    """Reflect roots of 1 + c_1 z + ... + c_k z^k that lie inside the unit circle."""
    coeffs = np.asarray(coeffs, dtype=float)
    if coeffs.size == 0 or stability_margin(coeffs)[1] > PROJECTION_MARGIN:
        return coeffs
    roots = np.roots(np.concatenate([_trim(coeffs)[::-1], [1.0]]))
    fixed = []
    for z in roots:
        mod = abs(z)
        if mod < 1.0:
            z = z / mod ** 2
            mod = 1.0 / mod
        if mod < PROJECTION_MARGIN:
            z = z * (PROJECTION_MARGIN / mod)
        fixed.append(complex(z))
    out = np.zeros(coeffs.size)
    poly = _poly_from_roots(fixed)
    out[:poly.size] = poly
    return out


def _ar_least_squares(y: np.ndarray, p: int) -> tuple[np.ndarray, float]:
    n = y.size
    if p == 0:
        return np.zeros(0), float(y @ y) / n
    X = np.zeros((n, p))
    for k in range(1, p + 1):
        X[k:, k - 1] = -y[:-k]
    if not np.any(y):
        warnings.warn("all-zero series: degenerate estimate sigma2 = 0", DegenerateEstimateWarning,
                      stacklevel=3)
        return np.zeros(p), 0.0
    phi, _, rank, _ = linalg.lstsq(X, y)
    if rank < p:
        raise SingularRegressionError(f"AR regression has rank {rank} < {p}")
    resid = y - X @ phi
    return phi, float(resid @ resid) / n


def arma_residuals(y: np.ndarray, phi, lam) -> np.ndarray:
    """Innovations e = L^{-1} F y under zero initial conditions."""
    return lfilter(np.r_[1.0, phi], np.r_[1.0, lam], y)


def _shift(x: np.ndarray, k: int) -> np.ndarray:
    out = np.zeros_like(x)
    out[k:] = x[:-k]
    return out


def _arma_css(y: np.ndarray, p: int, q: int, x0: np.ndarray) -> np.ndarray:
    # Exact complete-data likelihood under zero initial conditions has unit
    # Jacobian, so with sigma2 concentrated out it is a sum of squares.
    big = 1e8 * np.sqrt(y.size) * (np.abs(y).max() + 1.0)

    def resid(x):
        e = arma_residuals(y, x[:p], x[p:])
        if not np.all(np.isfinite(e)) or np.abs(e).max() > big:
            return np.full(y.size, big / np.sqrt(y.size))
        return e

    def jac(x):
        lam = x[p:]
        e = arma_residuals(y, x[:p], lam)
        J = np.empty((y.size, p + q))
        if not np.all(np.isfinite(e)) or np.abs(e).max() > big:
            J[:] = 0.0
            return J
        u = lfilter([1.0], np.r_[1.0, lam], y)
        w = lfilter([1.0], np.r_[1.0, lam], e)
        for k in range(1, p + 1):
            J[:, k - 1] = _shift(u, k)
        for k in range(1, q + 1):
            J[:, p + k - 1] = -_shift(w, k)
        return J

    sol = optimize.least_squares(resid, x0, jac=jac, method="lm", xtol=1e-14, ftol=1e-14,
                                 gtol=1e-14, max_nfev=200 * (p + q + 1))
    if sol.status <= 0:
        warnings.warn(f"ARMA fit did not converge: {sol.message}", ConvergenceWarning, stacklevel=3)
    return sol.x


def _complete_data_mle(y_full, orders: tuple[int, int], init: Optional[ArmaParams] = None
                      ) -> tuple[ArmaParams, bool]:
    """Maximum-likelihood ARMA fit to a fully observed series.

    The likelihood is exact under zero initial conditions. Pure AR models
    are solved in closed form by least squares; models with an MA part by
    Levenberg-Marquardt on the innovation sum of squares, started from
    ``init``. The result is projected onto the stable and invertible region;
    the flag reports whether the projection moved it.
    """
    y = np.asarray(y_full, dtype=float).ravel()
    p, q = orders
    if y.size <= p + q + 1:
        raise ValueError(f"need more than {p + q + 1} samples, got {y.size}")
    if q == 0:
        phi, _ = _ar_least_squares(y, p)
        lam = np.zeros(0)
    else:
        if not np.any(y):
            warnings.warn("all-zero series: degenerate estimate sigma2 = 0",
                          DegenerateEstimateWarning, stacklevel=2)
            return ArmaParams(np.zeros(p), np.zeros(q), 0.0), False
        x0 = np.zeros(p + q)
        if init is not None:
            x0[:min(p, init.p)] = init.phi[:p]
            x0[p:p + min(q, init.q)] = init.lam[:q]
        x = _arma_css(y, p, q, x0)
        phi, lam = x[:p], x[p:]
    phi_p, lam_p = project_polynomial(phi), project_polynomial(lam)
    projected = not (np.array_equal(phi_p, phi) and np.array_equal(lam_p, lam))
    e = arma_residuals(y, phi_p, lam_p)
    return ArmaParams(phi_p, lam_p, float(e @ e) / y.size), projected


def complete_data_mle(y_full, orders: tuple[int, int], init: Optional[ArmaParams] = None
                      ) -> ArmaParams:
    """Maximum-likelihood ARMA fit to a fully observed series.

    The likelihood is exact under zero initial conditions. Pure AR models
    are solved in closed form by least squares; models with an MA part by
    Levenberg-Marquardt on the innovation sum of squares, started from
    ``init``. The result is projected onto the stable and invertible region.
    """
    return _complete_data_mle(y_full, orders, init)[0]


def _param_distance(a: ArmaParams, b: ArmaParams) -> float:
    return float(np.linalg.norm(a.as_vector() - b.as_vector()))


def equalised_series(params: ArmaParams, rec: ObservationRecord, theta0: float = 1.0
                     ) -> tuple[np.ndarray, bool, float]:
    """Series with missing samples replaced by their equalisation estimate.

    Returns ``(y_filled, clamped, observed_loglik)`` where the log-likelihood
    is that of the observed samples under ``params``.
    """
    sigma = joint_covariance(params, rec.n)
    cond, loglik = condition_and_loglik(sigma, rec.observed_idx, rec.missing_idx,
                                        rec.observed_values)
    y_hat, clamped = equalisation_estimate(cond, theta0)
    return rec.filled(y_hat), clamped, loglik


def eqm_run(rec: ObservationRecord, orders: tuple[int, int], init: Optional[ArmaParams] = None,
            cfg: EqmConfig = EqmConfig()) -> tuple[ArmaParams, EstimationTrace]:
    """Alternate equalisation of the missing samples and complete-data refits."""
    if init is None:
        from .em import naive_estimate
        init = naive_estimate(rec, orders)
    trace = EstimationTrace()
    start = time.perf_counter()

    if rec.n_missing == 0:
        theta, proj = _complete_data_mle(rec.observed_values, orders, init)
        trace.params = [init, theta]
        trace.projected = [False, proj]
        trace.observed_loglik = [observed_loglik_dense(init, rec), observed_loglik_dense(theta, rec)]
        trace.wall_time = [0.0, time.perf_counter() - start]
        trace.termination = "no_missing"
        return theta, trace

    theta = init
    trace.params.append(theta)
    trace.projected.append(False)
    trace.wall_time.append(0.0)
    y_filled, clamped, loglik = equalised_series(theta, rec, cfg.theta0)
    trace.observed_loglik.append(loglik)
    while True:
        trace.clamp_count += int(clamped)
        new, proj = _complete_data_mle(y_filled, orders, theta)
        step = _param_distance(new, theta)
        theta = new
        y_filled, clamped, loglik = equalised_series(theta, rec, cfg.theta0)
        trace.params.append(theta)
        trace.projected.append(proj)
        trace.observed_loglik.append(loglik)
        trace.wall_time.append(time.perf_counter() - start)
        if cfg.criterion == "param" and step <= cfg.tol:
            trace.termination = "param_converged"
            break
        if cfg.criterion == "loglik" and abs(loglik - trace.observed_loglik[-2]) <= cfg.tol:
            trace.termination = "loglik_converged"
            break
        if trace.iterations >= cfg.max_iters:
            trace.termination = "max_iters"
            break
    return theta, trace


def stationarity_objective(theta: ArmaParams, rec: ObservationRecord, y_hat: np.ndarray) -> float:
    """log-likelihood of y_o plus log p_theta(y_hat | y_o), both from dense conditioning."""
    sigma = joint_covariance(theta, rec.n)
    cond, loglik = condition_and_loglik(sigma, rec.observed_idx, rec.missing_idx,
                                        rec.observed_values)
    return loglik + mvn_logpdf(y_hat, cond.mean, cond.cov)


def stationarity_gradient(theta_star: ArmaParams, rec: ObservationRecord, theta0: float = 1.0,
                          step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of the fixed-point objective at ``theta_star``.

    The equalised point is frozen at its value under ``theta_star``; a
    converged EqM iterate makes this gradient vanish.
    """
    sigma = joint_covariance(theta_star, rec.n)
    cond, _ = condition_and_loglik(sigma, rec.observed_idx, rec.missing_idx, rec.observed_values)
    y_hat, _ = equalisation_estimate(cond, theta0)
    vec = theta_star.as_vector()
    grad = np.zeros(vec.size)
    for i in range(vec.size):
        hi, lo = vec.copy(), vec.copy()
        hi[i] += step
        lo[i] -= step
        f_hi = stationarity_objective(ArmaParams.from_vector(hi, theta_star.orders), rec, y_hat)
        f_lo = stationarity_objective(ArmaParams.from_vector(lo, theta_star.orders), rec, y_hat)
        grad[i] = (f_hi - f_lo) / (2 * step)
    return grad
