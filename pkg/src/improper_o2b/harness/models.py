"""Data-generating models, sample streams and population-risk oracles."""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np
from scipy.optimize import brentq

from ..analysis import entropy, kl_discrete
from ..posterior import ConfigurationError

__all__ = [
    "Multinomial",
    "Logistic",
    "GaussianLinModel",
    "BoundedRegression",
    "Replay",
    "DataModel",
    "Stream",
    "LinearPredictor",
    "RiskEstimate",
    "uniform_ball",
    "generate",
    "true_risk",
    "excess_risk",
    "constrained_least_squares",
]

log = logging.getLogger(__name__)

GAUSS_LEGENDRE_NODES = 64
GAUSS_HERMITE_NODES = 40
# noise std of the Gaussian linear model: p(y|z) = pi^{-1/2} exp(-(y - z)^2)
GAUSS_NOISE_SD = math.sqrt(0.5)


def uniform_ball(rng: np.random.Generator, n: int, d: int, radius: float) -> np.ndarray:
    g = rng.standard_normal((n, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    return g * radius * rng.random((n, 1)) ** (1.0 / d)


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


@dataclass(frozen=True)
class Multinomial:
    p_star: tuple

    def __post_init__(self):
        p = np.asarray(self.p_star, dtype=float)
        if p.ndim != 1 or len(p) < 2 or np.any(p < 0) or abs(p.sum() - 1.0) > 1e-12:
            raise ConfigurationError("p_star must be a probability vector of length >= 2")

    @property
    def d(self) -> int:
        return len(self.p_star)


@dataclass(frozen=True)
class Logistic:
    """``X`` uniform on the radius-``r`` ball, ``Y ~ Bernoulli(sigmoid(theta^T X))``."""

    theta_star: tuple
    r: float = 1.0

    @property
    def d(self) -> int:
        return len(self.theta_star)


@dataclass(frozen=True)
class GaussianLinModel:
    """``X`` uniform on the radius-``r`` ball, ``Y = theta^T X + N(0, 1/2)``."""

    theta_star: tuple
    r: float = 1.0

    @property
    def d(self) -> int:
        return len(self.theta_star)


@dataclass(frozen=True)
class BoundedRegression:
    """``Y = g(X) + U(-a, a)`` with ``|g| <= l - a`` so ``|Y| <= l`` exactly.

    Well-specified: ``g(x) = theta^T x`` and covariates are drawn uniformly
    from the radius-``r`` ball conditioned on ``|theta^T x| <= l - a``
    (rejection). Misspecified: ``g(x) = (l - a) sin(3 theta^T x)``.
    """

    theta_star: tuple
    r: float = 1.0
    l: float = 1.0
    noise: float = 0.5
    misspecified: bool = False

    def __post_init__(self):
        if not 0.0 <= self.noise < self.l:
            raise ConfigurationError("noise half-width must lie in [0, l)")

    @property
    def d(self) -> int:
        return len(self.theta_star)

    @property
    def needs_rejection(self) -> bool:
        theta = np.asarray(self.theta_star, dtype=float)
        return not self.misspecified and np.linalg.norm(theta) * self.r > self.l - self.noise

    def target(self, X) -> np.ndarray:
        z = np.atleast_2d(X) @ np.asarray(self.theta_star, dtype=float)
        if self.misspecified:
            return (self.l - self.noise) * np.sin(3.0 * z)
        return z

    def sample_x(self, rng: np.random.Generator, n: int) -> np.ndarray:
        if not self.needs_rejection:
            return uniform_ball(rng, n, self.d, self.r)
        theta = np.asarray(self.theta_star, dtype=float)
        cap = self.l - self.noise
        out = []
        have = 0
        while have < n:
            cand = uniform_ball(rng, 2 * (n - have) + 16, self.d, self.r)
            keep = cand[np.abs(cand @ theta) <= cap]
            out.append(keep)
            have += len(keep)
        return np.vstack(out)[:n]


@dataclass(frozen=True)
class Replay:
    """Pairs read in order from a CSV with columns ``x1..xd, y``."""

    path: str

    def load(self):
        with open(self.path, newline="") as fh:
            rows = [[float(v) for v in row] for row in csv.reader(fh) if row and not row[0].startswith("x")]
        a = np.asarray(rows, dtype=float)
        return a[:, :-1], a[:, -1]


DataModel = Union[Multinomial, Logistic, GaussianLinModel, BoundedRegression, Replay]


@dataclass(frozen=True)
class Stream:
    """``T`` observations; iterating yields ``(x, y)`` (``x`` is ``None`` for
    multinomial samples)."""

    X: np.ndarray | None
    Y: np.ndarray

    def __len__(self) -> int:
        return len(self.Y)

    def __iter__(self):
        if self.X is None:
            return ((None, y) for y in self.Y)
        return zip(self.X, self.Y)


def generate(model: DataModel, T: int, seed: int) -> Stream:
    """``T`` i.i.d. draws (replays return the first ``T`` rows)."""
    if T < 1:
        raise ConfigurationError("T must be >= 1")
    rng = np.random.default_rng(seed)
    if isinstance(model, Multinomial):
        Y = rng.choice(model.d, size=T, p=np.asarray(model.p_star, dtype=float))
        return Stream(None, Y.astype(np.int64))
    if isinstance(model, Logistic):
        X = uniform_ball(rng, T, model.d, model.r)
        prob = _sigmoid(X @ np.asarray(model.theta_star, dtype=float))
        return Stream(X, (rng.random(T) < prob).astype(float))
    if isinstance(model, GaussianLinModel):
        X = uniform_ball(rng, T, model.d, model.r)
        return Stream(X, X @ np.asarray(model.theta_star, dtype=float) + GAUSS_NOISE_SD * rng.standard_normal(T))
    if isinstance(model, BoundedRegression):
        X = model.sample_x(rng, T)
        Y = model.target(X) + rng.uniform(-model.noise, model.noise, size=T)
        return Stream(X, np.clip(Y, -model.l, model.l))
    if isinstance(model, Replay):
        X, Y = model.load()
        if len(Y) < T:
            raise ConfigurationError(f"replay file has {len(Y)} rows, need {T}")
        return Stream(X[:T], Y[:T])
    raise ConfigurationError(f"unknown data model {type(model).__name__}")


# -- risk oracles -----------------------------------------------------------------


@dataclass(frozen=True)
class LinearPredictor:
    theta: tuple

    def __call__(self, X) -> np.ndarray:
        return np.atleast_2d(X) @ np.asarray(self.theta, dtype=float)


@dataclass(frozen=True)
class RiskEstimate:
    value: float
    se: float
    method: str


def _gl_1d(r: float):
    nodes, w = np.polynomial.legendre.leggauss(GAUSS_LEGENDRE_NODES)
    return r * nodes, w / 2.0  # uniform density on [-r, r]


def _x_design(model, method: str, n: int, rng):
    """Integration nodes and weights over the covariate law."""
    if method == "closed-form" and model.d == 1:
        x, w = _gl_1d(model.r)
        return x[:, None], w
    X = uniform_ball(rng, n, model.d, model.r)
    return X, np.full(n, 1.0 / n)


def _weighted_se(values, weights) -> float:
    if np.allclose(weights, weights[0]) and len(values) > 1:
        return float(np.std(values, ddof=1) / math.sqrt(len(values)))
    return 0.0


def _bernoulli_terms(model: Logistic, predictor: Callable, X):
    s = _sigmoid(X @ np.asarray(model.theta_star, dtype=float))
    q1 = np.asarray(predictor(np.column_stack([X, np.ones(len(X))])), dtype=float)
    q0 = np.asarray(predictor(np.column_stack([X, np.zeros(len(X))])), dtype=float)
    return s, q0, q1


def _gauss_terms(model: GaussianLinModel, predictor: Callable, X):
    """Per-x ``(E_Y[-log pbar(Y|x)], H(Y|x))`` by Gauss-Hermite in ``y``."""
    t, w = np.polynomial.hermite.hermgauss(GAUSS_HERMITE_NODES)
    w = w / math.sqrt(math.pi)
    z = X @ np.asarray(model.theta_star, dtype=float)
    # Y = z + sqrt(1/2) * N(0,1) = z + t under the physicists' weight exp(-t^2)
    ys = z[:, None] + t[None, :]
    rows = np.column_stack([np.repeat(X, len(t), axis=0), ys.ravel()])
    dens = np.asarray(predictor(rows), dtype=float).reshape(len(X), len(t))
    cross = -(np.log(dens) @ w)
    ent = 0.5 * math.log(math.pi) + 0.5  # entropy of N(z, 1/2)
    return cross, ent


def _method(model, method: str) -> str:
    closed = isinstance(model, Multinomial) or (isinstance(model, (Logistic, GaussianLinModel)) and model.d == 1)
    if method == "auto":
        return "closed-form" if closed else "monte-carlo"
    if method == "closed-form" and not closed:
        log.warning("no closed form for %s; falling back to Monte Carlo", type(model).__name__)
        return "monte-carlo"
    return method


def _probabilities(predictor, d: int) -> np.ndarray:
    if callable(predictor):
        return np.asarray(predictor(np.arange(d, dtype=float)[:, None]), dtype=float).reshape(-1)
    return np.asarray(predictor, dtype=float)


def true_risk(predictor, model: DataModel, method: str = "auto", n: int = 10**6, seed: int = 0) -> RiskEstimate:
    """Population risk: log-loss for density models, squared loss for regression."""
    rng = np.random.default_rng(seed)
    if isinstance(model, Multinomial):
        p_star = np.asarray(model.p_star, dtype=float)
        q = _probabilities(predictor, model.d)
        return RiskEstimate(entropy(p_star) + kl_discrete(p_star, q), 0.0, "closed-form")
    if isinstance(model, BoundedRegression):
        if isinstance(predictor, LinearPredictor) and not model.needs_rejection and not model.misspecified and method != "monte-carlo":
            diff = np.asarray(predictor.theta, dtype=float) - np.asarray(model.theta_star, dtype=float)
            second_moment = model.r**2 / (model.d + 2)
            return RiskEstimate(float(second_moment * diff @ diff + model.noise**2 / 3.0), 0.0, "closed-form")
        if method == "closed-form":
            log.warning("no closed form for this predictor; falling back to Monte Carlo")
        X = model.sample_x(rng, n)
        Y = model.target(X) + rng.uniform(-model.noise, model.noise, size=n)
        sq = (np.asarray(predictor(X), dtype=float) - Y) ** 2
        return RiskEstimate(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(n)), "monte-carlo")
    if isinstance(model, Replay):
        X, Y = model.load()
        sq = (np.asarray(predictor(X), dtype=float) - Y) ** 2
        return RiskEstimate(float(sq.mean()), float(sq.std(ddof=1) / math.sqrt(len(Y))), "empirical")
    m = _method(model, method)
    X, w = _x_design(model, m, n, rng)
    if isinstance(model, Logistic):
        s, q0, q1 = _bernoulli_terms(model, predictor, X)
        vals = -(s * np.log(q1) + (1 - s) * np.log(q0))
    elif isinstance(model, GaussianLinModel):
        vals, _ = _gauss_terms(model, predictor, X)
    else:
        raise ConfigurationError(f"no risk oracle for {type(model).__name__}")
    return RiskEstimate(float(vals @ w), _weighted_se(vals, w), m)


def constrained_least_squares(X, y, b: float) -> np.ndarray:
    """``argmin_{|theta| <= b} |X theta - y|^2`` via the ridge path."""
    theta, *_ = np.linalg.lstsq(X, y, rcond=None)
    if np.linalg.norm(theta) <= b:
        return theta
    G, c = X.T @ X, X.T @ y
    eye = np.eye(X.shape[1])

    def gap(lam):
        return np.linalg.norm(np.linalg.solve(G + lam * eye, c)) - b

    hi = 1.0
    while gap(hi) > 0:
        hi *= 2.0
    lam = brentq(gap, 0.0, hi, xtol=1e-14)
    return np.linalg.solve(G + lam * eye, c)


def _chunked(predictor, X, chunk: int = 4096) -> np.ndarray:
    return np.concatenate([np.asarray(predictor(X[i:i + chunk]), dtype=float).reshape(-1) for i in range(0, len(X), chunk)])


def excess_risk(predictor, model: DataModel, b: float | None = None, n: int = 20000, seed: int = 0, method: str = "auto", dictionary=None) -> RiskEstimate:
    """Risk of ``predictor`` minus the best risk in the reference class.

    Well-specified models have the generating parameter as optimum, so the
    difference is computed directly (a KL or a squared distance). For
    misspecified regression the optimum is the norm-constrained least-squares
    fit on the evaluation sample; with a ``dictionary`` it is the best
    dictionary element. Both sides share the same sample.
    """
    rng = np.random.default_rng(seed)
    if isinstance(model, Multinomial):
        p_star = np.asarray(model.p_star, dtype=float)
        return RiskEstimate(kl_discrete(p_star, _probabilities(predictor, model.d)), 0.0, "closed-form")
    if isinstance(model, (Logistic, GaussianLinModel)):
        m = _method(model, method)
        X, w = _x_design(model, m, n, rng)
        if isinstance(model, Logistic):
            s, q0, q1 = _bernoulli_terms(model, predictor, X)
            with np.errstate(divide="ignore", invalid="ignore"):
                vals = np.where(s > 0, s * np.log(s / q1), 0.0) + np.where(s < 1, (1 - s) * np.log((1 - s) / q0), 0.0)
        else:
            cross, ent = _gauss_terms(model, predictor, X)
            vals = cross - ent
        return RiskEstimate(float(vals @ w), _weighted_se(vals, w), m)
    if isinstance(model, BoundedRegression):
        X = model.sample_x(rng, n)
        g = model.target(X)
        f = _chunked(predictor, X)
        if dictionary is not None:
            best = min(float(np.mean((np.asarray(h(X), dtype=float).reshape(-1) - g) ** 2)) for h in dictionary)
            vals = (f - g) ** 2 - best
        elif model.misspecified:
            theta = constrained_least_squares(X, g, np.inf if b is None else b)
            vals = (f - g) ** 2 - (X @ theta - g) ** 2
        else:
            vals = (f - g) ** 2
        return RiskEstimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(n)), "monte-carlo")
    raise ConfigurationError(f"no excess-risk oracle for {type(model).__name__}")
