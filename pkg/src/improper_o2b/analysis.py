"""Risk-bound calculators, information-theoretic helpers, Freedman checks
and Monte-Carlo risk reports.

Logarithms are natural. Where a confidence or sample-size factor appears as
``log(x)`` it is read as ``log(max(x, 1))`` so bounds stay finite.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .losses import DomainError
from .posterior import ConfigurationError

__all__ = [
    "HypothesisWarning",
    "BoundParams",
    "bound_theorem1",
    "bound_aggregation",
    "bound_density",
    "bound_glm",
    "glm_bound_before_mu",
    "bound_discrete",
    "bound_linreg",
    "vaw_regret_bound",
    "kl_discrete",
    "entropy",
    "bregman_entropy_residual",
    "freedman_check",
    "freedman_tolerance",
    "rademacher_differences",
    "centered_bernoulli_differences",
    "RiskReport",
    "nearest_rank_quantile",
    "bootstrap_quantile_se",
    "excess_risk_quantiles",
]


class HypothesisWarning(UserWarning):
    """A bound was evaluated outside the hypotheses it was proven under."""


def _log1(x: float) -> float:
    return math.log(max(x, 1.0))


def _check_delta(delta: float):
    if not 0.0 < delta < 1.0:
        raise DomainError(f"delta must lie in (0, 1), got {delta}")


@dataclass(frozen=True)
class BoundParams:
    T: int
    delta: float = 0.05
    d: int = 1
    alpha: float | None = None
    m: float | None = None
    gamma: float | None = None
    kappa: float | None = None
    r: float | None = None
    b: float | None = None
    l: float | None = None
    mu: float | None = None
    sigma2: float | None = None
    eps2: float | None = None
    K: int | None = None

    def __post_init__(self):
        _check_delta(self.delta)
        if self.T < 1:
            raise DomainError("T must be >= 1")
        for name in ("alpha", "gamma", "r", "b", "l", "sigma2", "eps2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise DomainError(f"{name} must be positive")


def bound_theorem1(R_T: float, gamma: float, delta: float, T: int) -> float:
    """``(2 R_T + 2 gamma log(1/delta)) / T``."""
    _check_delta(delta)
    return (2.0 * R_T + 2.0 * gamma * math.log(1.0 / delta)) / T


def bound_aggregation(K: int, alpha: float, m: float, delta: float, T: int) -> float:
    """Finite-dictionary aggregation: ``(2 log K / alpha + 8 max(1/alpha, m) log(1/delta)) / T``."""
    _check_delta(delta)
    return (2.0 * math.log(K) / alpha + 8.0 * max(1.0 / alpha, m) * math.log(1.0 / delta)) / T


def bound_density(kl: float, m: float, delta: float, T: int, mu: float) -> float:
    """Smoothed-EWA density estimation: ``(2 KL + 8 max(1, m) log(1/delta)) / T + 2 mu``."""
    _check_delta(delta)
    return (2.0 * kl + 8.0 * max(1.0, m) * math.log(1.0 / delta)) / T + 2.0 * mu


def bound_glm(params: BoundParams) -> float:
    """GLM density estimation with Gaussian prior and ``mu = d/T``.

    ``[d (3 + log(2 + kappa (r b)^2 T / d^2)) + (8 log(T/d) + 8 m) log(1/delta)] / T``.
    """
    p = params
    d, T = p.d, p.T
    if T < 2 * d:
        warnings.warn(f"GLM bound assumes T >= 2d (T={T}, d={d})", HypothesisWarning, stacklevel=2)
    lead = d * (3.0 + math.log(2.0 + p.kappa * (p.r * p.b) ** 2 * T / d**2))
    conf = (8.0 * _log1(T / d) + 8.0 * p.m) * _log1(1.0 / p.delta)
    return (lead + conf) / T


def glm_bound_before_mu(params: BoundParams) -> float:
    """The GLM bound with ``mu`` left free (before substituting ``mu = d/T``).

    ``[d (1 + log(2 + kappa (r b)^2 T / d^2)) + 8 max(1, m) log(1/delta)] / T + 2 mu``.
    """
    p = params
    d, T = p.d, p.T
    lead = d * (1.0 + math.log(2.0 + p.kappa * (p.r * p.b) ** 2 * T / d**2))
    return (lead + 8.0 * max(1.0, p.m) * _log1(1.0 / p.delta)) / T + 2.0 * p.mu


def bound_discrete(d: int, T: int, delta: float) -> float:
    """``(22 d + 28 log(T) log(1/delta)) / T``; holds with probability ``1 - 2 delta``."""
    _check_delta(delta)
    if not T > 4 * d:
        warnings.warn(f"discrete bound assumes T > 4d (T={T}, d={d})", HypothesisWarning, stacklevel=2)
    return (22.0 * d + 28.0 * _log1(T) * _log1(1.0 / delta)) / T


def vaw_regret_bound(l: float, d: int, T: int, b: float, r: float) -> float:
    """Shifted-regret cap of clipped VAW: ``4 l^2 d log(1 + T b^2 r^2 / (4 d^2 l^2))``."""
    return 4.0 * l**2 * d * math.log(1.0 + T * b**2 * r**2 / (4.0 * d**2 * l**2))


def bound_linreg(params: BoundParams, mode: str) -> float:
    """Clipped linear-regression excess-risk bounds.

    ``mode="ewa-clipped"``: ``8 l^2 d / T (1 + log(2 + (r b / (2 l d))^2 T)) + 64 l^2 log(1/delta) / T``.
    ``mode="vaw-clipped"``: ``[8 l^2 d log(1 + T b^2 r^2 / (4 d^2 l^2)) + 64 max(l^2, b^2 r^2) log(1/delta)] / T``.
    """
    p = params
    l, d, T, b, r = p.l, p.d, p.T, p.b, p.r
    conf = math.log(1.0 / p.delta)
    if mode == "ewa-clipped":
        lead = 8.0 * l**2 * d / T * (1.0 + math.log(2.0 + (r * b / (2.0 * l * d)) ** 2 * T))
        return lead + 64.0 * l**2 * conf / T
    if mode == "vaw-clipped":
        lead = 8.0 * l**2 * d * math.log(1.0 + T * b**2 * r**2 / (4.0 * d**2 * l**2))
        return (lead + 64.0 * max(l**2, b**2 * r**2) * conf) / T
    raise ConfigurationError(f"unknown linear-regression mode {mode!r}")


# -- information theory -------------------------------------------------------


def kl_discrete(p, q) -> float:
    """``sum p log(p/q)`` with ``0 log 0 = 0``; ``inf`` if ``p`` is not ``<< q``."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    support = p > 0
    if np.any(q[support] <= 0):
        return math.inf
    return float(np.sum(p[support] * np.log(p[support] / q[support])))


def entropy(p) -> float:
    p = np.asarray(p, dtype=float)
    nz = p[p > 0]
    return float(-np.sum(nz * np.log(nz)))


def bregman_entropy_residual(p_hat, p_star) -> float:
    """``H(p*) + KL(p_hat || p*) - [2 H(p_hat/2 + p*/2) - H(p_hat)]``; nonnegative."""
    p_hat = np.asarray(p_hat, dtype=float)
    p_star = np.asarray(p_star, dtype=float)
    return (
        entropy(p_star)
        + kl_discrete(p_hat, p_star)
        - (2.0 * entropy(0.5 * p_hat + 0.5 * p_star) - entropy(p_hat))
    )


# -- Freedman's inequality --------------------------------------------------------

MartingaleGenerator = Callable[[np.random.Generator, int, int], tuple]


def rademacher_differences(R: float = 1.0) -> MartingaleGenerator:
    """``+-R`` fair signs; conditional variance ``R^2``."""
    def gen(rng, trials, T):
        x = R * (2.0 * rng.integers(0, 2, size=(trials, T)) - 1.0)
        return x, np.full((trials, T), R**2)

    gen.R = R
    return gen


def centered_bernoulli_differences(p: float) -> MartingaleGenerator:
    """``B - p`` with ``B ~ Bernoulli(p)``; bounded by ``max(p, 1 - p)``."""
    def gen(rng, trials, T):
        x = (rng.random((trials, T)) < p).astype(float) - p
        return x, np.full((trials, T), p * (1.0 - p))

    gen.R = max(p, 1.0 - p)
    return gen


def freedman_tolerance(delta: float, trials: int) -> float:
    return delta + 3.0 * math.sqrt(delta * (1.0 - delta) / trials)


def freedman_check(generator: MartingaleGenerator, R: float, lam: float, delta: float, trials: int, T: int = 100, seed: int = 0) -> float:
    """Fraction of trials with ``sum X_t > lam (e - 2) sum Var_t + log(1/delta) / lam``."""
    _check_delta(delta)
    if not 0.0 < lam <= 1.0 / R * (1.0 + 1e-12):
        raise DomainError(f"lambda must lie in (0, 1/R] = (0, {1.0 / R}], got {lam}")
    rng = np.random.default_rng(seed)
    x, var = generator(rng, trials, T)
    if np.any(np.abs(x) > R * (1.0 + 1e-12)):
        raise DomainError("martingale differences exceed R")
    threshold = lam * (math.e - 2.0) * var.sum(axis=1) + math.log(1.0 / delta) / lam
    return float(np.mean(x.sum(axis=1) > threshold))


# -- Monte-Carlo risk reports ------------------------------------------------------


def nearest_rank_quantile(values, level: float) -> float:
    """Order statistic of rank ``ceil(level * n)`` (1-based)."""
    v = np.sort(np.asarray(values, dtype=float))
    rank = max(1, math.ceil(level * len(v) - 1e-9))
    return float(v[rank - 1])


def bootstrap_quantile_se(values, level: float, n_boot: int = 1000, seed: int = 0) -> float:
    v = np.asarray(values, dtype=float)
    n = len(v)
    rng = np.random.default_rng(seed)
    rank = max(1, math.ceil(level * n - 1e-9))
    resampled = np.sort(v[rng.integers(0, n, size=(n_boot, n))], axis=1)[:, rank - 1]
    return float(np.std(resampled, ddof=1))


@dataclass
class RiskReport:
    risks: np.ndarray
    delta: float
    level: float
    quantile: float
    quantile_se: float
    bound: float | None = None
    violation_rate: float | None = None
    seeds: list = field(default_factory=list)
    runtime: float = 0.0
    meta: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "replications": int(len(self.risks)),
            "delta": self.delta,
            "level": self.level,
            "quantile": self.quantile,
            "quantile_se": self.quantile_se,
            "bound": self.bound,
            "violation_rate": self.violation_rate,
            "mean": float(np.mean(self.risks)),
            "median": float(np.median(self.risks)),
            "runtime_s": self.runtime,
            **self.meta,
        }


def excess_risk_quantiles(
    risks,
    delta: float,
    bound: float | None = None,
    level: float | None = None,
    n_boot: int = 1000,
    seed: int = 0,
    min_reps: int = 20,
) -> RiskReport:
    """Nearest-rank ``level`` quantile (default ``1 - delta``) and violation rate."""
    _check_delta(delta)
    r = np.asarray(risks, dtype=float)
    if len(r) < min_reps:
        raise ConfigurationError(f"need at least {min_reps} replications, got {len(r)}")
    level = 1.0 - delta if level is None else level
    viol = None if bound is None else float(np.mean(r > bound))
    return RiskReport(
        risks=r,
        delta=delta,
        level=level,
        quantile=nearest_rank_quantile(r, level),
        quantile_se=bootstrap_quantile_se(r, level, n_boot=n_boot, seed=seed),
        bound=bound,
        violation_rate=viol,
    )
