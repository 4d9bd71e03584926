"""Multivariate Gaussian model of hourly forecast errors.

Covers estimation from a day-by-hour error matrix, conditioning on
realized hours (Schur complement), and seeded sampling.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HOURS, InvalidArgumentError

SHRINKAGE = 0.05
RIDGE = 1e-8
MIN_DAYS = 30
SYM_TOL = 1e-9


class IllConditionedModelError(ArithmeticError):
    """The observed block of the covariance cannot be inverted."""


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator seeded through SeedSequence.

    ``seed`` may be an int or a tuple of ints (spawn-key style), so
    independent streams can be derived per day, hour and quantity.
    """
    if isinstance(seed, np.random.Generator):
        return seed
    if isinstance(seed, (tuple, list)):
        ss = np.random.SeedSequence([int(v) for v in seed])
    else:
        ss = np.random.SeedSequence(int(seed))
    return np.random.Generator(np.random.PCG64(ss))


@dataclass(frozen=True)
class GaussianErrorModel:
    mu: np.ndarray
    sigma: np.ndarray
    hour_labels: tuple

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        labels = tuple(int(h) for h in self.hour_labels)
        n = mu.size
        if mu.ndim != 1 or sigma.shape != (n, n) or len(labels) != n:
            raise InvalidArgumentError("mu, sigma and hour_labels dimensions disagree")
        if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(sigma))):
            raise InvalidArgumentError("error model has non-finite entries")
        scale = max(1.0, float(np.max(np.abs(sigma)))) if n else 1.0
        if n and np.max(np.abs(sigma - sigma.T)) > SYM_TOL * scale:
            raise InvalidArgumentError("sigma is not symmetric")
        sigma = 0.5 * (sigma + sigma.T)
        if n and np.linalg.eigvalsh(sigma)[0] < -SYM_TOL * scale:
            raise InvalidArgumentError("sigma is not positive semidefinite")
        mu.setflags(write=False)
        sigma.setflags(write=False)
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "sigma", sigma)
        object.__setattr__(self, "hour_labels", labels)

    @property
    def dim(self) -> int:
        return self.mu.size

    def positions(self, hours: Sequence[int]) -> np.ndarray:
        lookup = {h: i for i, h in enumerate(self.hour_labels)}
        try:
            return np.array([lookup[int(h)] for h in hours], dtype=int)
        except KeyError as exc:
            raise InvalidArgumentError(f"hour {exc.args[0]} not covered by the model") from None

    def marginal(self, hours: Sequence[int]) -> "GaussianErrorModel":
        idx = self.positions(hours)
        return GaussianErrorModel(self.mu[idx], self.sigma[np.ix_(idx, idx)], tuple(hours))

    @classmethod
    def zero(cls, hours: Sequence[int] = range(1, HOURS + 1)) -> "GaussianErrorModel":
        n = len(hours)
        return cls(np.zeros(n), np.zeros((n, n)), tuple(hours))


def estimate(errors: np.ndarray, shrinkage: float = SHRINKAGE,
             hour_labels: Sequence[int] | None = None) -> GaussianErrorModel:
    """Column means and diagonally shrunk sample covariance.

    ``sigma = (1 - shrinkage) * S + shrinkage * diag(S)``
    """
    e = np.asarray(errors, dtype=float)
    if e.ndim != 2:
        raise InvalidArgumentError("errors must be a days x hours matrix")
    if e.shape[0] < MIN_DAYS:
        raise InvalidArgumentError(f"need at least {MIN_DAYS} days of errors, got {e.shape[0]}")
    if not np.all(np.isfinite(e)):
        raise InvalidArgumentError("error matrix contains non-finite entries")
    mu = e.mean(axis=0)
    s = np.cov(e, rowvar=False, ddof=1).reshape(e.shape[1], e.shape[1])
    sigma = (1.0 - shrinkage) * s + shrinkage * np.diag(np.diag(s))
    if hour_labels is None:
        hour_labels = range(1, e.shape[1] + 1)
    return GaussianErrorModel(mu, sigma, tuple(hour_labels))


def condition(model: GaussianErrorModel, observed_hours: Sequence[int], observed_values) -> GaussianErrorModel:
    """Distribution of the unobserved hours given realized errors.

    mean  = mu2 + S21 S11^-1 (obs - mu1)
    cov   = S22 - S21 S11^-1 S12

    Observed hours with zero variance carry no information (their
    covariance row is zero) and are dropped before inversion.
    """
    obs_idx = model.positions(observed_hours)
    values = np.asarray(observed_values, dtype=float).ravel()
    if values.size != obs_idx.size:
        raise InvalidArgumentError("observed values and observed hours differ in length")
    if obs_idx.size == 0 or obs_idx.size >= model.dim:
        raise InvalidArgumentError("must observe a non-empty proper subset of the model's hours")
    if len(set(obs_idx.tolist())) != obs_idx.size:
        raise InvalidArgumentError("observed hours contain duplicates")
    mask = np.ones(model.dim, dtype=bool)
    mask[obs_idx] = False
    rest = np.flatnonzero(mask)
    labels = tuple(model.hour_labels[i] for i in rest)

    sig = model.sigma
    scale = max(float(np.max(np.diag(sig))), 0.0)
    informative = np.diag(sig)[obs_idx] > 1e-12 * scale if scale > 0 else np.zeros(obs_idx.size, bool)
    obs_idx, values = obs_idx[informative], values[informative]
    mu2 = model.mu[rest]
    s22 = sig[np.ix_(rest, rest)]
    if obs_idx.size == 0:
        return GaussianErrorModel(mu2, s22, labels)

    s11 = sig[np.ix_(obs_idx, obs_idx)]
    s21 = sig[np.ix_(rest, obs_idx)]
    ridge = RIDGE * np.trace(s11) / s11.shape[0]
    try:
        chol = np.linalg.cholesky(s11 + ridge * np.eye(s11.shape[0]))
    except np.linalg.LinAlgError:
        raise IllConditionedModelError("observed covariance block is singular beyond ridge repair") from None
    # K = S21 S11^-1 via two triangular solves
    tmp = np.linalg.solve(chol, s21.T)
    gain = np.linalg.solve(chol.T, tmp).T
    mean = mu2 + gain @ (values - model.mu[obs_idx])
    cov = s22 - gain @ s21.T
    cov = 0.5 * (cov + cov.T)
    # remove negative rounding noise on the diagonal
    w, v = np.linalg.eigh(cov)
    if w.size and w[0] < 0:
        cov = (v * np.clip(w, 0.0, None)) @ v.T
        cov = 0.5 * (cov + cov.T)
    return GaussianErrorModel(mean, cov, labels)


def sqrt_factor(sigma: np.ndarray) -> np.ndarray:
    """Symmetric PSD square root, with negative eigenvalues clipped to zero."""
    w, v = np.linalg.eigh(sigma)
    return (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T


def sample(model: GaussianErrorModel, n: int, seed) -> np.ndarray:
    """Draw ``n`` error vectors, one per row; deterministic in ``seed``."""
    if n < 1:
        raise InvalidArgumentError("sample count must be at least 1")
    rng = make_rng(seed)
    z = rng.standard_normal((n, model.dim))
    return model.mu + z @ sqrt_factor(model.sigma)
