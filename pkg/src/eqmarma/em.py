"""Baselines: EM for a fully parametrised state-space model, and zero-fill.

The EM baseline does not estimate a structured ARMA model. It fits free
(A, Q, R) of dimension r = max(p, q + 1) with C = [1, 0, ..., 0] and a known
zero initial state, using smoothed moments from :func:`kalman_smooth`.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass

import numpy as np

from .eqm import complete_data_mle
from .gauss import LOG_2PI
from .model import ArmaParams, ObservationRecord
from .statespace import SmootherOutput, StateSpaceModel, build_state_space, kalman_filter, kalman_smooth
from .trace import EstimationTrace

# relative eigenvalue cutoff below which S00 is treated as singular
SINGULAR_RTOL = 1e-8


class RidgeWarning(RuntimeWarning):
    pass


@dataclass(frozen=True)
class SsmParams:
    A: np.ndarray
    Q: np.ndarray
    R: float

    @property
    def r(self) -> int:
        return self.A.shape[0]

    @property
    def model(self) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.Q, self.R)

    def as_vector(self) -> np.ndarray:
        iu = np.triu_indices(self.r)
        return np.concatenate([self.A.ravel(), self.Q[iu], [self.R]])

    @classmethod
    def from_arma(cls, params: ArmaParams, R: float) -> "SsmParams":
        m = build_state_space(params, R)
        return cls(m.A, m.Q, float(R))


@dataclass
class Moments:
    """Smoothed cross-moment sums over the full time range."""

    S11: np.ndarray  # sum_t E[x_t x_t^T]
    S10: np.ndarray  # sum_t E[x_t x_{t-1}^T]
    S00: np.ndarray  # sum_t E[x_{t-1} x_{t-1}^T]
    obs_sq: float  # sum_{t in I_o} E[(y_t - x_t[0])^2]
    n: int
    n_obs: int


def smoothed_moments(sm: SmootherOutput, rec: ObservationRecord) -> Moments:
    xs, Vs = sm.smoothed_means, sm.smoothed_covs
    second = Vs + xs[:, :, None] * xs[:, None, :]
    S11 = second.sum(axis=0)
    # x_{-1} = 0 contributes nothing to S00 and S10
    S00 = second[:-1].sum(axis=0)
    S10 = (sm.lag_one_covs[1:] + xs[1:, :, None] * xs[:-1, None, :]).sum(axis=0)
    oi = rec.observed_idx
    resid = rec.observed_values - xs[oi, 0]
    obs_sq = float(resid @ resid + np.maximum(Vs[oi, 0, 0], 0.0).sum())
    return Moments(S11, S10, S00, obs_sq, rec.n, oi.size)


def q_function(params: SsmParams, mom: Moments) -> float:
    """Expected complete-data log-likelihood given smoothed moments."""
    A, Q, R = params.A, params.Q, params.R
    r = params.r
    resid = mom.S11 - A @ mom.S10.T - mom.S10 @ A.T + A @ mom.S00 @ A.T
    sign, logdet = np.linalg.slogdet(Q)
    if sign <= 0 or not R > 0:
        return -math.inf
    state = -0.5 * (mom.n * (r * LOG_2PI + logdet) + np.trace(np.linalg.solve(Q, resid)))
    obs = -0.5 * (mom.n_obs * (LOG_2PI + math.log(R)) + mom.obs_sq / R)
    return float(state + obs)


def m_step(mom: Moments) -> SsmParams:
    S00 = mom.S00
    w, V = np.linalg.eigh(0.5 * (S00 + S00.T))
    cutoff = SINGULAR_RTOL * max(np.trace(S00), 0.0) / S00.shape[0]
    if w[0] > cutoff:
        A = np.linalg.solve(S00.T, mom.S10.T).T
    else:
        # Directions below the cutoff carry (numerically) no state energy, so
        # S10 vanishes there too and A is free on them; invert on the rest.
        warnings.warn(f"singular S00 (min eigenvalue {w[0]:.3e}), truncating below {cutoff:.3e}",
                      RidgeWarning, stacklevel=3)
        keep = w > cutoff
        A = (mom.S10 @ V[:, keep]) / w[keep] @ V[:, keep].T
    Q = (mom.S11 - A @ mom.S10.T) / mom.n
    Q = 0.5 * (Q + Q.T)
    R = mom.obs_sq / mom.n_obs
    return SsmParams(A, Q, float(R))


def em_step(params: SsmParams, rec: ObservationRecord) -> tuple[SsmParams, float]:
    """One EM iteration; returns the update and the observed loglik at ``params``."""
    sm = kalman_smooth(params.model, rec)
    return m_step(smoothed_moments(sm, rec)), sm.loglik


def em_run(rec: ObservationRecord, r: int, init: SsmParams, max_iters: int = 100,
           tol: float = 1e-6, criterion: str = "param") -> tuple[SsmParams, EstimationTrace]:
    """Iterate :func:`em_step`.

    ``criterion`` is ``"param"`` (2-norm of the change in (A, Q, R) <= tol),
    ``"loglik"`` (observed loglik change <= tol) or ``"fixed"`` (exactly
    ``max_iters`` steps).
    """
    if criterion not in ("param", "loglik", "fixed"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if init.r != r:
        raise ValueError(f"initial state dimension {init.r} != {r}")
    trace = EstimationTrace()
    start = time.perf_counter()
    theta = init
    trace.params.append(theta)
    trace.wall_time.append(0.0)
    while True:
        new, loglik = em_step(theta, rec)
        if len(trace.observed_loglik) < len(trace.params):
            trace.observed_loglik.append(loglik)
        if (criterion == "loglik" and len(trace.observed_loglik) >= 2
                and abs(trace.observed_loglik[-1] - trace.observed_loglik[-2]) <= tol):
            trace.termination = "loglik_converged"
            break
        step = float(np.linalg.norm(new.as_vector() - theta.as_vector()))
        theta = new
        trace.params.append(theta)
        trace.wall_time.append(time.perf_counter() - start)
        if criterion == "param" and step <= tol:
            trace.termination = "param_converged"
            break
        if trace.iterations >= max_iters:
            trace.termination = "max_iters"
            break
    if len(trace.observed_loglik) < len(trace.params):
        trace.observed_loglik.append(kalman_filter(theta.model, rec).loglik)
        trace.wall_time[-1] = time.perf_counter() - start
    return theta, trace


def naive_estimate(rec: ObservationRecord, orders: tuple[int, int]) -> ArmaParams:
    """Complete-data fit after setting every missing sample to zero."""
    return complete_data_mle(rec.filled(0.0), orders)


def em_init(naive: ArmaParams, rec: ObservationRecord) -> SsmParams:
    """EM starting point: exact realisation of the naive fit, R = 1e-4 var(y_o)."""
    return SsmParams.from_arma(naive, 1e-4 * float(np.var(rec.observed_values)))
