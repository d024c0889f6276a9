"""Exponential-weights posteriors on shifted losses.

A posterior is carried as a support (expert indices, a simplex lattice, a
parameter grid, or a cloud of Metropolis samples) together with log-domain
weights proportional to ``prior(f) * exp(-alpha * sum_s shifted_s(f))``.

Prediction maps take the support nodes and a batch of query rows and return
an ``(n_nodes, n_queries)`` array of predictions ``f(query)``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Union

import numpy as np
from scipy.special import gammaln

from .losses import DomainError, ShiftedLoss

__all__ = [
    "ConfigurationError",
    "RejectedRecordError",
    "FiniteUniform",
    "FiniteWeighted",
    "GaussianIsotropic",
    "Dirichlet",
    "IntegratorConfig",
    "LossRecord",
    "PosteriorState",
    "init_posterior",
    "ewa_update",
    "mean_prediction",
    "mean_prediction_se",
    "kl_gaussian",
    "log_dirichlet_norm",
    "dirichlet_log_density",
    "dirichlet_data_prior",
    "simplex_grid",
]

log = logging.getLogger(__name__)

MAX_DENSE_GRID_DIM = 3
MAX_METROPOLIS_DIM = 8
MAX_SIMPLEX_NODES = 5_000_000


class ConfigurationError(ValueError):
    """Unsupported prior/backend pairing or invalid integrator settings."""


class RejectedRecordError(ValueError):
    """A shifted-loss record evaluated to NaN somewhere on the support."""


# -- priors -----------------------------------------------------------------


@dataclass(frozen=True)
class FiniteUniform:
    K: int

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("finite prior needs K >= 1")

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.K, 1.0 / self.K)


@dataclass(frozen=True)
class FiniteWeighted:
    weights: tuple

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.ndim != 1 or w.size == 0 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ConfigurationError("finite weights must be a probability vector")
        object.__setattr__(self, "weights", tuple(float(v) for v in w))

    @property
    def K(self) -> int:
        return len(self.weights)


@dataclass(frozen=True)
class GaussianIsotropic:
    sigma2: float
    d: int

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ConfigurationError("Gaussian prior needs sigma2 > 0")
        if self.d < 1:
            raise ConfigurationError("Gaussian prior needs d >= 1")

    def log_density(self, theta):
        theta = np.atleast_2d(theta)
        return -0.5 * np.sum(theta**2, axis=1) / self.sigma2 - 0.5 * self.d * math.log(2 * math.pi * self.sigma2)


@dataclass(frozen=True)
class Dirichlet:
    params: tuple

    def __post_init__(self):
        a = np.asarray(self.params, dtype=float)
        if a.ndim != 1 or a.size < 2 or np.any(a <= 0):
            raise ConfigurationError("Dirichlet parameters must be a positive vector of length >= 2")
        object.__setattr__(self, "params", tuple(float(v) for v in a))

    @property
    def d(self) -> int:
        return len(self.params)

    @property
    def mean(self) -> np.ndarray:
        a = np.asarray(self.params)
        return a / a.sum()


Prior = Union[FiniteUniform, FiniteWeighted, GaussianIsotropic, Dirichlet]


@dataclass(frozen=True)
class IntegratorConfig:
    """Numerical integration settings.

    ``grid_resolution`` is points per axis (dense grid) or the simplex lattice
    resolution; ``grid_halfwidth`` is the dense-grid box half-width in prior
    standard deviations. Metropolis runs ``n_chains`` walkers for
    ``mcmc_steps`` steps per update and drops the first ``burn_in``.
    """

    grid_resolution: int = 1000
    grid_halfwidth: float = 6.0
    mcmc_steps: int = 200
    burn_in: int = 50
    proposal_scale: float = 1.0
    n_chains: int = 32

    def __post_init__(self):
        for name in ("grid_resolution", "mcmc_steps", "burn_in", "n_chains"):
            if getattr(self, name) < 1:
                raise ConfigurationError(f"{name} must be >= 1")
        if self.burn_in >= self.mcmc_steps:
            raise ConfigurationError("burn_in must be smaller than mcmc_steps")
        if not self.proposal_scale > 0 or not self.grid_halfwidth > 0:
            raise ConfigurationError("proposal_scale and grid_halfwidth must be positive")


# -- normalizers and divergences ---------------------------------------------


def kl_gaussian(sigma2: float, eps2: float, theta_star_norm2: float, d: int) -> float:
    """KL(N(theta*, eps2 I) || N(0, sigma2 I))."""
    if not sigma2 > 0 or not eps2 > 0:
        raise DomainError("variances must be positive")
    if theta_star_norm2 < 0:
        raise DomainError("squared norm must be nonnegative")
    return (
        0.5 * d * math.log(sigma2)
        + (theta_star_norm2 + d * eps2) / (2.0 * sigma2)
        - 0.5 * d
        - 0.5 * d * math.log(eps2)
    )


def log_dirichlet_norm(params) -> float:
    """Log multivariate Beta: ``sum lgamma(a_i) - lgamma(sum a_i)``."""
    a = np.asarray(params, dtype=float)
    if np.any(a <= 0):
        raise DomainError("Dirichlet parameters must be positive")
    return float(np.sum(gammaln(a)) - gammaln(a.sum()))


def dirichlet_log_density(p, params):
    p = np.atleast_2d(np.asarray(p, dtype=float))
    a = np.asarray(params, dtype=float)
    return np.sum((a - 1.0) * np.log(p), axis=1) - log_dirichlet_norm(a)


def dirichlet_data_prior(counts) -> Dirichlet:
    """Dirichlet(1/2) tilted by ``prod_i p_i^(counts_i / 2)``.

    Conjugacy collapses the tilt into ``params_i = 1/2 + counts_i / 2``.
    """
    c = np.asarray(counts, dtype=float)
    if np.any(c < 0):
        raise DomainError("counts must be nonnegative")
    return Dirichlet(tuple(0.5 + 0.5 * c))


# -- quadrature supports ------------------------------------------------------


def _compositions(total: int, parts: int) -> np.ndarray:
    """All positive integer vectors of length ``parts`` summing to ``total``."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    if parts == 2:
        k = np.arange(1, total, dtype=np.int64)
        return np.column_stack([k, total - k])
    blocks = []
    for first in range(1, total - parts + 2):
        rest = _compositions(total - first, parts - 1)
        blocks.append(np.column_stack([np.full(len(rest), first, dtype=np.int64), rest]))
    return np.vstack(blocks)


def simplex_grid(d: int, resolution: int):
    """Interior lattice of the simplex with equal quadrature weights.

    Nodes are ``k / (resolution + 1)`` for positive integer ``k`` summing to
    ``resolution + 1``; for ``d = 2`` that gives ``resolution`` nodes.
    """
    if d not in (2, 3, 4):
        raise ConfigurationError(f"simplex quadrature supports d in {{2, 3, 4}}, got {d}")
    if resolution < 2:
        raise ConfigurationError("simplex resolution must be >= 2")
    n = resolution + 1
    count = math.comb(n - 1, d - 1)
    if count > MAX_SIMPLEX_NODES:
        raise ConfigurationError(f"simplex lattice would have {count} nodes")
    nodes = _compositions(n, d).astype(float) / n
    weights = np.full(len(nodes), 1.0 / len(nodes))
    return nodes, weights


def _cell_log_density(nodes: np.ndarray, params, resolution: int) -> np.ndarray:
    """Dirichlet log density with each ``p_i^(a_i - 1)`` replaced by its
    integral over the node's lattice cell divided by the spacing ``1/n``.

    The first cell reaches the boundary, so parameters below one (integrable
    edge singularities) keep their mass.
    """
    n = resolution + 1
    a = np.asarray(params, dtype=float)
    k = np.rint(nodes * n)
    log_hi = np.log((k + 0.5) / n)
    # log(hi^a - lo^a) = a log hi + log(1 - (lo/hi)^a), kept in log space for large a
    with np.errstate(divide="ignore"):
        log_ratio = np.where(k <= 1, -np.inf, np.log((k - 0.5) / (k + 0.5)))
    log_cell = a * log_hi + np.log(-np.expm1(a * log_ratio)) + math.log(n) - np.log(a)
    return log_cell.sum(axis=1) - log_dirichlet_norm(a)


def _dense_grid(prior: GaussianIsotropic, config: IntegratorConfig):
    if prior.d > MAX_DENSE_GRID_DIM:
        raise ConfigurationError(f"dense grid supports d <= {MAX_DENSE_GRID_DIM}, got {prior.d}")
    half = config.grid_halfwidth * math.sqrt(prior.sigma2)
    axis = np.linspace(-half, half, config.grid_resolution)
    mesh = np.meshgrid(*([axis] * prior.d), indexing="ij")
    return np.column_stack([g.ravel() for g in mesh])


# -- posterior state ------------------------------------------------------------

PredictMap = Callable[[np.ndarray, np.ndarray], np.ndarray]

_BACKENDS = {
    "exact-finite": (FiniteUniform, FiniteWeighted),
    "simplex-grid": (Dirichlet,),
    "dense-grid": (GaussianIsotropic,),
    "metropolis": (GaussianIsotropic,),
}

_DEFAULT_BACKEND = {
    FiniteUniform: "exact-finite",
    FiniteWeighted: "exact-finite",
    Dirichlet: "simplex-grid",
    GaussianIsotropic: "dense-grid",
}


@dataclass(frozen=True)
class LossRecord:
    shifted: ShiftedLoss
    query: np.ndarray


@dataclass(frozen=True)
class PosteriorState:
    """EWA posterior at one round; treat as immutable.

    For grid backends ``log_weights`` is the unnormalized log posterior at
    ``nodes`` (quadrature weight and prior density included). For the
    Metropolis backend ``nodes`` are the retained samples, equally weighted,
    and ``chain_ids`` labels the walker each sample came from.
    """

    prior: Prior
    alpha: float
    backend: str
    config: IntegratorConfig
    seed: int
    predict_map: PredictMap
    nodes: np.ndarray
    log_weights: np.ndarray
    history: tuple = ()
    chain_ids: np.ndarray | None = None
    walkers: np.ndarray | None = field(default=None, repr=False)

    @property
    def t(self) -> int:
        """Number of loss records absorbed so far."""
        return len(self.history)

    @property
    def weights(self) -> np.ndarray:
        lw = self.log_weights
        top = np.max(lw) if lw.size else -np.inf
        if not np.isfinite(top):
            log.warning("posterior weights degenerate at round %d; falling back to the prior", self.t)
            return _prior_weights(self)
        w = np.exp(lw - top)
        return w / w.sum()

    def predictions(self, query) -> np.ndarray:
        q = np.atleast_2d(np.asarray(query, dtype=float))
        return self.predict_map(self.nodes, q)

    def predict(self, query) -> np.ndarray:
        """Posterior-mean prediction for each query row."""
        return self.weights @ self.predictions(query)


def _prior_weights(state: PosteriorState) -> np.ndarray:
    prior = state.prior
    if isinstance(prior, (FiniteUniform, FiniteWeighted)):
        return np.asarray(prior.weights, dtype=float)
    if isinstance(prior, Dirichlet):
        lw = _cell_log_density(state.nodes, prior.params, state.config.grid_resolution)
    elif state.backend == "metropolis":
        return np.full(len(state.nodes), 1.0 / len(state.nodes))
    else:
        lw = prior.log_density(state.nodes)
    w = np.exp(lw - lw.max())
    return w / w.sum()


def init_posterior(
    prior: Prior,
    alpha: float,
    predict_map: PredictMap,
    backend: str | None = None,
    config: IntegratorConfig | None = None,
    seed: int = 0,
) -> PosteriorState:
    """Round-1 posterior (the prior) on the backend's support."""
    if not alpha > 0:
        raise DomainError("learning rate alpha must be positive")
    config = config or IntegratorConfig()
    backend = backend or _DEFAULT_BACKEND[type(prior)]
    if backend not in _BACKENDS:
        raise ConfigurationError(f"unknown backend {backend!r}")
    if not isinstance(prior, _BACKENDS[backend]):
        raise ConfigurationError(f"backend {backend!r} cannot integrate a {type(prior).__name__} prior")

    chain_ids = walkers = None
    if backend == "exact-finite":
        nodes = np.arange(prior.K, dtype=float)[:, None]
        with np.errstate(divide="ignore"):
            log_w = np.log(np.asarray(prior.weights, dtype=float))
    elif backend == "simplex-grid":
        nodes, qw = simplex_grid(prior.d, config.grid_resolution)
        log_w = np.log(qw) + _cell_log_density(nodes, prior.params, config.grid_resolution)
    elif backend == "dense-grid":
        nodes = _dense_grid(prior, config)
        log_w = prior.log_density(nodes)
    else:
        if prior.d > MAX_METROPOLIS_DIM:
            raise ConfigurationError(f"metropolis supports d <= {MAX_METROPOLIS_DIM}, got {prior.d}")
        rng = np.random.default_rng([seed, 0])
        n_keep = config.mcmc_steps - config.burn_in
        nodes = rng.normal(scale=math.sqrt(prior.sigma2), size=(n_keep * config.n_chains, prior.d))
        chain_ids = np.tile(np.arange(config.n_chains), n_keep)
        walkers = nodes[-config.n_chains:].copy()
        log_w = np.zeros(len(nodes))
    return PosteriorState(
        prior=prior,
        alpha=float(alpha),
        backend=backend,
        config=config,
        seed=int(seed),
        predict_map=predict_map,
        nodes=nodes,
        log_weights=log_w,
        chain_ids=chain_ids,
        walkers=walkers,
    )


def _record_losses(state: PosteriorState, record: LossRecord, nodes: np.ndarray) -> np.ndarray:
    preds = state.predict_map(nodes, np.atleast_2d(record.query))[:, 0]
    losses = record.shifted.value(preds)
    if np.any(np.isnan(losses)):
        raise RejectedRecordError(f"shifted loss is NaN on the support at round {state.t + 1}")
    return losses


def _history_arrays(history):
    queries = np.vstack([np.atleast_2d(r.query) for r in history])
    centers = np.array([r.shifted.center for r in history])
    outcomes = np.array([r.shifted.outcome for r in history])
    return queries, centers, outcomes


def _metropolis_update(state: PosteriorState, history: tuple) -> PosteriorState:
    cfg = state.config
    prior = state.prior
    base = history[-1].shifted.base
    queries, centers, outcomes = _history_arrays(history)

    def log_target(theta):
        preds = state.predict_map(theta, queries)
        losses = base.value(0.5 * preds + 0.5 * centers[None, :], outcomes[None, :])
        return prior.log_density(theta) - state.alpha * losses.sum(axis=1)

    rng = np.random.default_rng([state.seed, len(history)])
    walkers = state.walkers.copy()
    spread = np.std(state.nodes, axis=0)
    step = cfg.proposal_scale * np.maximum(spread, 1e-3 * math.sqrt(prior.sigma2)) * 2.38 / math.sqrt(prior.d)
    current = log_target(walkers)
    kept = []
    for i in range(cfg.mcmc_steps):
        proposal = walkers + step * rng.standard_normal(walkers.shape)
        cand = log_target(proposal)
        accept = np.log(rng.random(len(walkers))) < cand - current
        walkers[accept] = proposal[accept]
        current[accept] = cand[accept]
        if i >= cfg.burn_in:
            kept.append(walkers.copy())
    nodes = np.vstack(kept)
    return replace(
        state,
        nodes=nodes,
        log_weights=np.zeros(len(nodes)),
        history=history,
        chain_ids=np.tile(np.arange(cfg.n_chains), len(kept)),
        walkers=walkers,
    )


def ewa_update(state: PosteriorState, shifted: ShiftedLoss, query) -> PosteriorState:
    """Absorb one shifted loss, returning the next-round posterior."""
    record = LossRecord(shifted=shifted, query=np.asarray(query, dtype=float))
    history = state.history + (record,)
    if state.backend == "metropolis":
        # validate the record on the current support before sampling
        _record_losses(state, record, state.nodes[: state.config.n_chains])
        return _metropolis_update(state, history)
    losses = _record_losses(state, record, state.nodes)
    log_w = state.log_weights - state.alpha * losses
    # keep the log scale bounded; normalization is shift-invariant
    top = np.max(log_w)
    if np.isfinite(top):
        log_w = log_w - top
    return replace(state, log_weights=log_w, history=history)


def mean_prediction(state: PosteriorState, query) -> float:
    """``E_{f ~ P_t}[f(query)]`` under the backend's approximation."""
    return float(state.predict(query)[0])


def mean_prediction_se(state: PosteriorState, query) -> float:
    """Monte-Carlo standard error of :func:`mean_prediction` (0 for grids).

    Uses the spread of per-walker means across independent chains.
    """
    if state.backend != "metropolis":
        return 0.0
    preds = state.predictions(query)[:, 0]
    n = state.config.n_chains
    means = np.bincount(state.chain_ids, weights=preds, minlength=n) / np.bincount(state.chain_ids, minlength=n)
    return float(np.std(means, ddof=1) / math.sqrt(n))
