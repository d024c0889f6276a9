"""Discrete distribution estimation with a data-dependent Dirichlet prior
and suffix averaging, plus a Laplace (add-one) baseline."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from ..analysis import HypothesisWarning
from ..losses import DomainError, log_loss, smoothed_log_loss_family
from ..o2b import average_predictor, run
from ..posterior import ConfigurationError, IntegratorConfig, dirichlet_data_prior, init_posterior
from .ewa import EwaLearner

__all__ = ["DiscreteDistConfig", "DiscreteFit", "discrete_dist_estimator", "laplace_estimator"]


@dataclass(frozen=True)
class DiscreteDistConfig:
    """Alphabet size ``d`` (symbols ``0..d-1``), sample size ``T``,
    smoothing ``mu`` (default ``d/T``) and simplex lattice resolution."""

    d: int
    T: int
    mu: float | None = None
    resolution: int = 1000

    def __post_init__(self):
        if not 2 <= self.d <= 4:
            raise ConfigurationError(f"simplex quadrature supports 2 <= d <= 4, got {self.d}")
        if self.T < 2:
            raise ConfigurationError("need at least two samples")
        if not 0.0 <= self.smoothing <= 0.5:
            raise DomainError(f"mu must lie in [0, 1/2], got {self.smoothing}")
        if not self.T > 4 * self.d:
            warnings.warn(f"T={self.T} <= 4d={4 * self.d}; the risk bound does not apply", HypothesisWarning, stacklevel=3)

    @property
    def smoothing(self) -> float:
        return min(self.d / self.T, 0.5) if self.mu is None else self.mu


@dataclass
class DiscreteFit:
    p: np.ndarray
    prior_params: np.ndarray
    trajectory: object
    mu: float


def _symbols(samples, d: int) -> np.ndarray:
    s = np.asarray(samples)
    if s.ndim != 1 or not np.issubdtype(s.dtype, np.integer):
        raise DomainError("samples must be a 1-D integer array")
    if np.any((s < 0) | (s >= d)):
        raise DomainError(f"symbols must lie in 0..{d - 1}")
    return s


def discrete_dist_estimator(samples, config: DiscreteDistConfig, return_fit: bool = False):
    """Estimate a distribution on ``{0, ..., d-1}``.

    The first half of the sample sets a Dirichlet prior with parameters
    ``1/2 + counts/2``; EWA on shifted smoothed log-losses runs over the
    second half and its posterior means are averaged. The result is
    ``(1 - mu) pbar + mu / d``. An odd trailing sample is dropped.
    """
    d = config.d
    s = _symbols(samples, d)
    if len(s) != config.T:
        raise ConfigurationError(f"config.T={config.T} but {len(s)} samples given")
    half = len(s) // 2
    first, second = s[:half], s[half: 2 * half]
    prior = dirichlet_data_prior(np.bincount(first, minlength=d))
    mu = config.smoothing

    if mu > 0:
        loss = smoothed_log_loss_family(mu, 1.0, p0_min=1.0 / d)
    else:
        loss = log_loss(1.0 / (config.resolution + 1))

    def predict_map(nodes, queries):
        return nodes[:, queries[:, 0].astype(int)]

    state = init_posterior(prior, loss.alpha, predict_map, config=IntegratorConfig(grid_resolution=config.resolution))
    learner = EwaLearner(
        state,
        loss,
        query_fn=lambda x, y: np.array([float(y)]),
        outcome_fn=lambda x, y: 1.0 / d,
    )
    traj = run([(None, int(y)) for y in second], learner)
    pbar = average_predictor(traj).predict(np.arange(d, dtype=float)[:, None])
    p = (1.0 - mu) * pbar + mu / d
    p = p / p.sum()
    if return_fit:
        return DiscreteFit(p=p, prior_params=prior.params, trajectory=traj, mu=mu)
    return p


def laplace_estimator(samples, d: int) -> np.ndarray:
    """Add-one estimate ``(counts + 1) / (T + d)``."""
    s = _symbols(samples, d)
    return (np.bincount(s, minlength=d) + 1.0) / (len(s) + d)
