"""ARMA model representation, simulation and experiment problems.

Sign convention throughout the package::

    y_t + phi_1 y_{t-1} + ... + phi_p y_{t-p} = e_t + lam_1 e_{t-1} + ... + lam_q e_{t-q}

with e_t ~ N(0, sigma2) and zero initial conditions (y_t = e_t = 0 for t <= 0).
Time indices in code are 0-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.signal import lfilter


class InvalidInputError(ValueError):
    """Raised for malformed arguments (non-finite coefficients, bad fractions, ...)."""


def _as_coeffs(x) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    return arr


@dataclass(frozen=True)
class ArmaParams:
    """AR coefficients ``phi``, MA coefficients ``lam`` and innovation variance."""

    phi: np.ndarray = field(default_factory=lambda: np.zeros(0))
    lam: np.ndarray = field(default_factory=lambda: np.zeros(0))
    sigma2: float = 1.0

    def __post_init__(self):
        phi = _as_coeffs(self.phi)
        lam = _as_coeffs(self.lam)
        if not (np.all(np.isfinite(phi)) and np.all(np.isfinite(lam))):
            raise InvalidInputError("ARMA coefficients must be finite")
        if not np.isfinite(self.sigma2) or self.sigma2 < 0:
            raise InvalidInputError(f"sigma2 must be finite and >= 0, got {self.sigma2}")
        phi.setflags(write=False)
        lam.setflags(write=False)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "sigma2", float(self.sigma2))

    @property
    def p(self) -> int:
        return self.phi.size

    @property
    def q(self) -> int:
        return self.lam.size

    @property
    def orders(self) -> tuple[int, int]:
        return self.p, self.q

    @property
    def is_stable(self) -> bool:
        return stability_margin(self.phi)[0]

    @property
    def is_invertible(self) -> bool:
        return stability_margin(self.lam)[0]

    def as_vector(self) -> np.ndarray:
        """Flatten to ``[phi..., lam..., sigma2]``."""
        return np.concatenate([self.phi, self.lam, [self.sigma2]])

    @classmethod
    def from_vector(cls, vec, orders: tuple[int, int]) -> "ArmaParams":
        p, q = orders
        vec = np.asarray(vec, dtype=float)
        return cls(vec[:p], vec[p:p + q], float(vec[p + q]))

    def __eq__(self, other):
        if not isinstance(other, ArmaParams):
            return NotImplemented
        return (np.array_equal(self.phi, other.phi) and np.array_equal(self.lam, other.lam)
                and self.sigma2 == other.sigma2)

    def __hash__(self):
        return hash((self.phi.tobytes(), self.lam.tobytes(), self.sigma2))


@dataclass(frozen=True)
class ObservationRecord:
    """A length-``n`` series with an explicit observed/missing partition.

    Only the observed values are stored; missing positions have no value at
    all. Use :meth:`filled` to obtain a dense array with a chosen fill.
    """

    n: int
    observed_idx: np.ndarray
    observed_values: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.observed_idx, dtype=np.intp).ravel()
        vals = np.asarray(self.observed_values, dtype=float).ravel()
        if idx.size != vals.size:
            raise InvalidInputError("observed_idx and observed_values differ in length")
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= self.n):
            raise InvalidInputError("observed_idx must be strictly increasing within [0, n)")
        if not np.all(np.isfinite(vals)):
            raise InvalidInputError("observed values must be finite")
        idx.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "observed_idx", idx)
        object.__setattr__(self, "observed_values", vals)
        mask = np.zeros(self.n, dtype=bool)
        mask[idx] = True
        mask.setflags(write=False)
        object.__setattr__(self, "_mask", mask)

    @classmethod
    def complete(cls, y) -> "ObservationRecord":
        y = np.asarray(y, dtype=float).ravel()
        return cls(y.size, np.arange(y.size), y)

    @classmethod
    def from_values(cls, values: Sequence[Optional[float]]) -> "ObservationRecord":
        """Build from a sequence where ``None`` marks a missing entry."""
        idx = [i for i, v in enumerate(values) if v is not None]
        return cls(len(values), np.array(idx, dtype=np.intp),
                   np.array([values[i] for i in idx], dtype=float))

    @property
    def observed_mask(self) -> np.ndarray:
        return self._mask

    @property
    def missing_idx(self) -> np.ndarray:
        return np.flatnonzero(~self._mask)

    @property
    def n_missing(self) -> int:
        return self.n - self.observed_idx.size

    @property
    def values(self) -> list:
        """Full-length list with ``None`` at missing positions."""
        out: list = [None] * self.n
        for i, v in zip(self.observed_idx.tolist(), self.observed_values.tolist()):
            out[i] = v
        return out

    def filled(self, fill=0.0) -> np.ndarray:
        """Dense copy with missing entries set to ``fill`` (scalar or array over I_m)."""
        y = np.empty(self.n)
        y[self._mask] = self.observed_values
        y[~self._mask] = fill
        return y


@dataclass(frozen=True)
class ExperimentProblem:
    estimation: ObservationRecord
    validation: np.ndarray
    orders: tuple[int, int]
    seed: int
    true_params: Optional[ArmaParams] = None


def _trim(coeffs: np.ndarray, rel: float = 1e-13) -> np.ndarray:
    """Drop negligible trailing coefficients; their roots sit near infinity."""
    scale = max(1.0, float(np.abs(coeffs).max(initial=0.0)))
    keep = np.flatnonzero(np.abs(coeffs) > rel * scale)
    return coeffs[:keep[-1] + 1] if keep.size else coeffs[:0]


def stability_margin(phi) -> tuple[bool, float]:
    """Smallest root modulus of ``1 + phi_1 z + ... + phi_p z^p``.

    Returns ``(stable, min_modulus)`` with ``stable`` iff every root lies
    strictly outside the unit circle. An empty or all-zero polynomial has no
    roots and a margin of ``inf``.
    """
    phi = _as_coeffs(phi)
    if not np.all(np.isfinite(phi)):
        raise InvalidInputError("coefficients must be finite")
    roots = np.roots(np.concatenate([_trim(phi)[::-1], [1.0]]))
    if roots.size == 0:
        return True, math.inf
    m = float(np.min(np.abs(roots)))
    return m > 1.0, m


def psi_weights(params: ArmaParams, count: int) -> np.ndarray:
    """Impulse response psi_0..psi_{count-1} of the ARMA transfer function."""
    if count < 1:
        raise InvalidInputError("count must be >= 1")
    impulse = np.zeros(count)
    impulse[0] = 1.0
    return arma_filter(params, impulse)


def arma_filter(params: ArmaParams, noise) -> np.ndarray:
    """Run the ARMA recursion on a given noise sequence with zero initial conditions."""
    b = np.concatenate([[1.0], params.lam])
    a = np.concatenate([[1.0], params.phi])
    return lfilter(b, a, np.asarray(noise, dtype=float))


def simulate_arma(params: ArmaParams, n: int, rng_seed: int) -> np.ndarray:
    if n < 1:
        raise InvalidInputError("n must be >= 1")
    rng = np.random.default_rng(rng_seed)
    e = rng.standard_normal(n) * math.sqrt(params.sigma2)
    return arma_filter(params, e)


def _poly_from_roots(roots: list[complex]) -> np.ndarray:
    # prod_i (1 - z / z_i) expanded as [1, c_1, ..., c_k] in ascending powers
    poly = np.array([1.0 + 0j])
    for z in roots:
        poly = np.convolve(poly, [1.0, -1.0 / z])
    return poly.real[1:]


def _random_roots(k: int, rng: np.random.Generator, rmin=1.05, rmax=3.0) -> list[complex]:
    roots: list[complex] = []
    while len(roots) < k:
        radius = rng.uniform(rmin, rmax)
        if k - len(roots) >= 2 and rng.random() < 0.5:
            angle = rng.uniform(0.0, math.pi)
            z = radius * complex(math.cos(angle), math.sin(angle))
            roots.extend([z, z.conjugate()])
        else:
            roots.append(radius * (1.0 if rng.random() < 0.5 else -1.0))
    return roots


def random_stable_arma(p: int, q: int, sigma2: float, rng_seed: int) -> ArmaParams:
    """Random ARMA(p, q) whose AR and MA roots have moduli in [1.05, 3]."""
    if p < 0 or q < 0:
        raise InvalidInputError("orders must be non-negative")
    if not sigma2 > 0:
        raise InvalidInputError("sigma2 must be > 0")
    rng = np.random.default_rng(rng_seed)
    phi = _poly_from_roots(_random_roots(p, rng))
    lam = _poly_from_roots(_random_roots(q, rng))
    return ArmaParams(phi, lam, sigma2)


def estimation_length(n: int) -> int:
    return (2 * n) // 3


def make_problem(series, missing_fraction: float, rng_seed: int,
                 orders: tuple[int, int] = (0, 0),
                 true_params: Optional[ArmaParams] = None) -> ExperimentProblem:
    """Split a realisation 2:1 into estimation/validation and mask the estimation part."""
    y = np.asarray(series, dtype=float).ravel()
    if y.size < 3:
        raise InvalidInputError("series needs at least 3 points")
    if not 0.0 <= missing_fraction < 1.0:
        raise InvalidInputError(f"missing_fraction must lie in [0, 1), got {missing_fraction}")
    n_est = estimation_length(y.size)
    n_miss = int(math.floor(missing_fraction * n_est))
    rng = np.random.default_rng(rng_seed)
    missing = rng.choice(n_est, size=n_miss, replace=False)
    mask = np.ones(n_est, dtype=bool)
    mask[missing] = False
    obs_idx = np.flatnonzero(mask)
    rec = ObservationRecord(n_est, obs_idx, y[:n_est][obs_idx])
    return ExperimentProblem(rec, y[n_est:].copy(), tuple(orders), rng_seed, true_params)
