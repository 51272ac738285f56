"""State-space realisation of ARMA models and Kalman filtering/smoothing.

Model (scalar output, C = [1, 0, ..., 0])::

    x_t = A x_{t-1} + v_t,    v_t ~ N(0, Q)
    y_t = x_t[0] + w_t,       w_t ~ N(0, R)

with the state before the first sample known to be zero. Missing samples
get a time update only.

The smoother is the backward (r_t, N_t) recursion of de Jong / Durbin and
Koopman, which never inverts a predicted covariance. That matters because
the exact ARMA realisation has rank-one Q and the early predicted
covariances are singular.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .gauss import LOG_2PI
from .model import ArmaParams, ObservationRecord, psi_weights

DIFFUSE_KAPPA = 1e7


class NumericalDegeneracyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class StateSpaceModel:
    A: np.ndarray
    Q: np.ndarray
    R: float
    B: Optional[np.ndarray] = None

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @property
    def C(self) -> np.ndarray:
        c = np.zeros(self.r)
        c[0] = 1.0
        return c


@dataclass
class FilterResult:
    loglik: float
    predicted_means: np.ndarray  # (N, r): x_{t|t-1}
    predicted_covs: np.ndarray  # (N, r, r)
    filtered_means: np.ndarray
    filtered_covs: np.ndarray
    innovations: np.ndarray  # zero where missing
    innovation_vars: np.ndarray  # zero where missing
    observed: np.ndarray  # bool mask


@dataclass
class SmootherOutput:
    smoothed_means: np.ndarray  # (N, r)
    smoothed_covs: np.ndarray  # (N, r, r)
    lag_one_covs: np.ndarray  # (N, r, r): Cov[x_t, x_{t-1} | y_o], zero at t = 0
    loglik: float
    filter: FilterResult


def build_state_space(params: ArmaParams, measurement_noise: float = 0.0) -> StateSpaceModel:
    """Companion-form realisation with r = max(p, q + 1)."""
    r = max(params.p, params.q + 1)
    a = np.zeros((r, r))
    a[np.arange(r - 1), np.arange(1, r)] = 1.0
    phi = np.zeros(r)
    phi[:params.p] = params.phi
    a[-1, :] = -phi[::-1]
    b = psi_weights(params, r)
    return StateSpaceModel(a, params.sigma2 * np.outer(b, b), float(measurement_noise), b)


def kalman_filter(model: StateSpaceModel, rec: ObservationRecord,
                  diffuse: bool = False) -> FilterResult:
    A, Q, R = model.A, model.Q, model.R
    r, n = model.r, rec.n
    mask = rec.observed_mask
    y = rec.filled(0.0)

    xp = np.zeros((n, r))
    Pp = np.zeros((n, r, r))
    xf = np.zeros((n, r))
    Pf = np.zeros((n, r, r))
    v = np.zeros(n)
    F = np.zeros(n)

    x = np.zeros(r)
    P = DIFFUSE_KAPPA * np.eye(r) if diffuse else np.zeros((r, r))
    At = A.T
    loglik = 0.0
    for t in range(n):
        x = A @ x
        P = A @ P @ At + Q
        xp[t] = x
        Pp[t] = P
        if mask[t]:
            f = P[0, 0] + R
            if not f > 0.0:
                raise NumericalDegeneracyError(f"innovation variance {f} <= 0 at t={t}")
            innov = y[t] - x[0]
            k = P[:, 0] / f
            x = x + k * innov
            P = P - np.outer(k, P[0, :])
            P = 0.5 * (P + P.T)
            v[t] = innov
            F[t] = f
            loglik -= 0.5 * (LOG_2PI + np.log(f) + innov * innov / f)
        xf[t] = x
        Pf[t] = P
    return FilterResult(loglik, xp, Pp, xf, Pf, v, F, mask.copy())


def kalman_smooth(model: StateSpaceModel, rec: ObservationRecord,
                  diffuse: bool = False) -> SmootherOutput:
    """Smoothed state moments and lag-one covariances given the observed samples."""
    filt = kalman_filter(model, rec, diffuse=diffuse)
    A = model.A
    r, n = model.r, rec.n
    xp, Pp, v, F, mask = (filt.predicted_means, filt.predicted_covs,
                          filt.innovations, filt.innovation_vars, filt.observed)
    eye = np.eye(r)

    xs = np.zeros((n, r))
    Vs = np.zeros((n, r, r))
    lag = np.zeros((n, r, r))
    rr = np.zeros(r)  # r_t: smoothed x_{t+1} = a_{t+1} + P_{t+1} r_t
    NN = np.zeros((r, r))
    for t in range(n - 1, -1, -1):
        P = Pp[t]
        if t + 1 < n:
            # Cov[x_t, x_{t+1}] = P_t L_t^T (I - N_t P_{t+1}); stored transposed at t+1
            Lt = _transition_gain(A, P, F[t]) if mask[t] else A
            lag[t + 1] = (P @ Lt.T @ (eye - NN @ Pp[t + 1])).T
        if mask[t]:
            Lt = _transition_gain(A, P, F[t])
            rr = v[t] / F[t] * np.eye(1, r, 0)[0] + Lt.T @ rr
            NN = Lt.T @ NN @ Lt
            NN[0, 0] += 1.0 / F[t]
        else:
            rr = A.T @ rr
            NN = A.T @ NN @ A
        xs[t] = xp[t] + P @ rr
        V = P - P @ NN @ P
        Vs[t] = 0.5 * (V + V.T)
    return SmootherOutput(xs, Vs, lag, filt.loglik, filt)


def _transition_gain(A: np.ndarray, P: np.ndarray, f: float) -> np.ndarray:
    # L_t = A - K_t C with K_t = A P_t C^T / F_t
    L = A.copy()
    L[:, 0] -= (A @ P[:, 0]) / f
    return L


def one_step_predictions(model: StateSpaceModel, series, history: Optional[ObservationRecord] = None
                         ) -> np.ndarray:
    """One-step-ahead predictions C x_{t|t-1} over ``series``.

    If ``history`` is given the filter first runs over it (missing samples
    included) and continues into ``series`` from the resulting state.
    """
    series = np.asarray(series, dtype=float).ravel()
    if history is None:
        rec = ObservationRecord.complete(series)
        offset = 0
    else:
        offset = history.n
        rec = ObservationRecord(history.n + series.size,
                                np.concatenate([history.observed_idx,
                                                offset + np.arange(series.size)]),
                                np.concatenate([history.observed_values, series]))
    filt = kalman_filter(model, rec)
    return filt.predicted_means[offset:, 0].copy()
