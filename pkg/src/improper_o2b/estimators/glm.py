"""Conditional density estimation for generalized linear models.

The learner runs EWA with a Gaussian prior on the shifted smoothed log-loss
of the model density ``p(y | x, theta) = exp(-g_y(theta^T x))`` and returns
the smoothed average ``(1 - mu) pbar_T + mu p0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..analysis import BoundParams, glm_bound_before_mu
from ..losses import DomainError, smoothed_log_loss_family
from ..o2b import AveragedPredictor, average_predictor, run
from ..posterior import GaussianIsotropic, IntegratorConfig, init_posterior
from .ewa import EwaLearner

__all__ = [
    "GlmSpec",
    "logistic_spec",
    "gaussian_linmodel_spec",
    "select_mu",
    "glm_learner",
    "conditional_density_estimator",
    "DEFAULT_GRID_RESOLUTION",
]

# points per axis of the dense theta-grid, by dimension
DEFAULT_GRID_RESOLUTION = {1: 801, 2: 121, 3: 41}

SPREAD_GRID = 201


@dataclass(frozen=True)
class GlmSpec:
    """A GLM family with its curvature bound and smoothing reference.

    ``density(z, y)`` is ``p(y | z)`` for the linear predictor ``z``;
    ``p0(y, x)`` the reference density; ``m`` the declared bound on
    smoothed-loss differences over ``{|theta| <= b}``.
    """

    name: str
    density: Callable
    kappa: float
    r: float
    b: float
    d: int
    p0: Callable
    mu: float
    p_max: float
    m: float

    def __post_init__(self):
        if not 0.0 <= self.mu <= 0.5:
            raise DomainError(f"mu must lie in [0, 1/2], got {self.mu}")
        if not (self.r > 0 and self.b > 0 and self.d >= 1):
            raise DomainError("r, b must be positive and d >= 1")

    @property
    def sigma2(self) -> float:
        return self.b**2 / self.d

    def neg_log_density(self, z, y):
        return -np.log(self.density(z, y))


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def logistic_spec(r: float, b: float, d: int, T: int) -> GlmSpec:
    """Bernoulli labels ``y in {0, 1}``; ``kappa = 1/4``, ``p0 = 1/2``, ``mu = d/T``."""
    mu = min(d / T, 0.5)

    def density(z, y):
        s = _sigmoid(z)
        return np.where(np.asarray(y) > 0.5, s, 1.0 - s)

    # the learner's mixture prediction can take any value in (0, 1), so the
    # only a-priori cap is the full range of the smoothed loss
    return GlmSpec(
        name="logistic",
        density=density,
        kappa=0.25,
        r=r,
        b=b,
        d=d,
        p0=lambda y, x: np.full(np.shape(y), 0.5),
        mu=mu,
        p_max=1.0,
        m=float(math.log((1.0 - 0.5 * mu) / (0.5 * mu))),
    )


_GAUSS_PEAK = 1.0 / math.sqrt(math.pi)


def _gauss_density(z, y):
    return _GAUSS_PEAK * np.exp(-((np.asarray(y) - np.asarray(z)) ** 2))


def select_mu(d: int, T: int, kappa: float, r: float, b: float, delta: float) -> float:
    """Pick ``mu`` from ``{d/T * 2^k, k = 0..6}`` (capped at 1/2) minimizing
    the free-``mu`` GLM bound with ``m = log(2/mu)``."""
    cands = sorted({min(d / T * 2**k, 0.5) for k in range(7)})
    def value(mu):
        p = BoundParams(T=T, delta=delta, d=d, kappa=kappa, r=r, b=b, mu=mu, m=math.log(2.0 / mu))
        return glm_bound_before_mu(p)
    return min(cands, key=value)


def gaussian_linmodel_spec(r: float, b: float, d: int, T: int, delta: float = 0.05) -> GlmSpec:
    """``p(y | z) = pi^{-1/2} exp(-(y - z)^2)`` with the symmetric two-bump reference."""
    rb = r * b

    def p0(y, x):
        y = np.asarray(y, dtype=float)
        return 0.5 * _GAUSS_PEAK * (np.exp(-((y - rb) ** 2)) + np.exp(-((y + rb) ** 2)))

    kappa = 2.0
    mu = select_mu(d, T, kappa, r, b, delta)
    return GlmSpec(
        name="gaussian-linmodel",
        density=_gauss_density,
        kappa=kappa,
        r=r,
        b=b,
        d=d,
        p0=p0,
        mu=mu,
        p_max=_GAUSS_PEAK,
        m=math.log(2.0 / mu),
    )


def _glm_predict_map(spec: GlmSpec):
    d = spec.d

    def predict_map(nodes, queries):
        z = nodes @ queries[:, :d].T
        return spec.density(z, queries[:, d][None, :])

    return predict_map


def glm_learner(spec: GlmSpec, backend: str | None = None, config: IntegratorConfig | None = None, seed: int = 0) -> EwaLearner:
    if spec.mu <= 0:
        raise DomainError("the GLM estimator needs mu > 0 to keep the loss bounded")
    if backend is None:
        backend = "dense-grid" if spec.d in DEFAULT_GRID_RESOLUTION else "metropolis"
    if config is None:
        config = IntegratorConfig(grid_resolution=DEFAULT_GRID_RESOLUTION.get(spec.d, 2))
    loss = smoothed_log_loss_family(spec.mu, spec.p_max, p0_min=1e-300, m=spec.m)
    prior = GaussianIsotropic(spec.sigma2, spec.d)
    state = init_posterior(prior, loss.alpha, _glm_predict_map(spec), backend=backend, config=config, seed=seed)
    d = spec.d
    z_unit = np.linspace(-1.0, 1.0, SPREAD_GRID)

    def query_fn(x, y):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if len(x) != d:
            raise DomainError(f"covariate has dimension {len(x)}, expected {d}")
        return np.append(x, float(y))

    def outcome_fn(x, y):
        return float(spec.p0(np.asarray(float(y)), np.atleast_1d(x)))

    def spread_fn(q, outcome, center):
        # worst loss gap over |theta| <= b: z = theta^T x ranges over [-b|x|, b|x|]
        zmax = spec.b * np.linalg.norm(q[:d])
        p = spec.density(zmax * z_unit, q[d])
        return float(np.max(np.abs(loss(center, outcome) - loss(p, outcome))))

    return EwaLearner(state, loss, query_fn=query_fn, outcome_fn=outcome_fn, declared_m=spec.m, spread_fn=spread_fn)


def conditional_density_estimator(
    spec: GlmSpec,
    stream,
    backend: str | None = None,
    config: IntegratorConfig | None = None,
    seed: int = 0,
) -> AveragedPredictor:
    """``pbar(y | x) = (1 - mu) (1/T) sum_t E_{P_t} p(y | x, theta) + mu p0(y | x)``.

    Query rows are ``[x_1, ..., x_d, y]``. Rounds whose covariate norm
    exceeds ``r`` are counted in ``trajectory.flags['norm_violations']``;
    ``trajectory.m_observed`` reports the largest measured loss gap.
    """
    stream = list(stream)
    violations = sum(np.linalg.norm(np.atleast_1d(x)) > spec.r * (1 + 1e-12) for x, _ in stream)
    learner = glm_learner(spec, backend, config, seed)
    traj = run(stream, learner)
    traj.flags = {"norm_violations": int(violations), "m_exceeded": traj.m_exceeded}
    mu, d = spec.mu, spec.d

    def smooth(out, q):
        return (1.0 - mu) * out + mu * spec.p0(q[:, d], q[:, :d])

    return average_predictor(traj, transform=smooth)
