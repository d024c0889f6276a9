"""Exp-concave losses, the midpoint (shifted) transform, clipping and smoothing.

Every loss is a scalar function ``h(w, y)`` of a real prediction ``w`` and an
outcome ``y``. A loss is alpha-exp-concave on its domain when
``alpha * h'(w)**2 <= h''(w)``, i.e. ``exp(-alpha * h)`` is concave in ``w``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "DomainError",
    "ExpConcaveLoss",
    "ShiftedLoss",
    "gamma",
    "negative_term_residual",
    "make_shifted",
    "clip",
    "smoothed_log_loss",
    "clip_inequality_residuals",
    "exp_concavity_violation",
    "check_exp_concavity",
    "observed_range",
    "finite_difference_errors",
    "squared_loss",
    "clipped_squared_loss",
    "log_loss",
    "smoothed_log_loss_family",
    "logistic_nll",
]

EXP_CONCAVITY_GRID = 1000
EXP_CONCAVITY_TOL = 1e-8


class DomainError(ValueError):
    """An argument lies outside the domain where an operation is defined."""


ArrayFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ExpConcaveLoss:
    """A loss ``value(w, y)`` with exp-concavity constant ``alpha``.

    ``m`` bounds ``|value(w, y) - value(w', y)|`` over the domain for every
    admissible outcome. ``d1``/``d2`` are analytic derivatives in ``w``.
    """

    name: str
    alpha: float
    m: float
    value: ArrayFn
    d1: ArrayFn | None = None
    d2: ArrayFn | None = None
    domain: tuple[float, float] = (-math.inf, math.inf)
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not self.alpha > 0 or not self.m > 0:
            raise DomainError(f"{self.name}: alpha and m must be positive")
        lo, hi = self.domain
        if not lo < hi:
            raise DomainError(f"{self.name}: empty domain {self.domain}")

    def __call__(self, w, y):
        return self.value(np.asarray(w, dtype=float), np.asarray(y, dtype=float))

    @property
    def gamma(self) -> float:
        return gamma(self.alpha, self.m)

    def contains(self, w, tol: float = 1e-12) -> bool:
        w = np.asarray(w, dtype=float)
        lo, hi = self.domain
        return bool(np.all((w >= lo - tol) & (w <= hi + tol)))


@dataclass(frozen=True)
class ShiftedLoss:
    """``w -> base(w/2 + center/2, outcome)``; keeps the base loss's alpha."""

    base: ExpConcaveLoss
    center: float
    outcome: float

    @property
    def alpha(self) -> float:
        return self.base.alpha

    def midpoint(self, w):
        return 0.5 * np.asarray(w, dtype=float) + 0.5 * self.center

    def value(self, w):
        return self.base.value(self.midpoint(w), np.asarray(self.outcome, dtype=float))

    def d1(self, w):
        if self.base.d1 is None:
            raise NotImplementedError(f"{self.base.name} has no analytic d1")
        return 0.5 * self.base.d1(self.midpoint(w), np.asarray(self.outcome, dtype=float))

    def d2(self, w):
        if self.base.d2 is None:
            raise NotImplementedError(f"{self.base.name} has no analytic d2")
        return 0.25 * self.base.d2(self.midpoint(w), np.asarray(self.outcome, dtype=float))

    __call__ = value

    def as_loss(self) -> ExpConcaveLoss:
        """View as a plain loss in ``w`` (outcome argument ignored)."""
        d1 = None if self.base.d1 is None else (lambda w, y: self.d1(w))
        d2 = None if self.base.d2 is None else (lambda w, y: self.d2(w))
        return ExpConcaveLoss(
            name=f"shifted[{self.base.name}]",
            alpha=self.base.alpha,
            m=self.base.m,
            value=lambda w, y: self.value(w),
            d1=d1,
            d2=d2,
            domain=self.base.domain,
        )


def gamma(alpha: float, m: float) -> float:
    """Return ``4 * max(m, 1/alpha)``."""
    if not alpha > 0 or not m > 0:
        raise DomainError(f"gamma needs alpha > 0 and m > 0, got alpha={alpha}, m={m}")
    return 4.0 * max(m, 1.0 / alpha)


def _require_in_domain(h: ExpConcaveLoss, *points):
    for p in points:
        if not h.contains(p):
            raise DomainError(f"{h.name}: point {p} outside domain {h.domain}")


def negative_term_residual(h: ExpConcaveLoss, x, y, outcome):
    """Slack in the midpoint inequality with the negative quadratic term.

    Returns ``h(x)/2 + h(y)/2 - (h(x) - h(y))**2 / (4 gamma) - h((x + y)/2)``,
    which is nonnegative for an exp-concave ``h`` with range bound ``m``.
    Vectorizes over ``x``, ``y`` and ``outcome``.
    """
    _require_in_domain(h, x, y)
    g = h.gamma
    hx = h(x, outcome)
    hy = h(y, outcome)
    hmid = h(0.5 * np.asarray(x, dtype=float) + 0.5 * np.asarray(y, dtype=float), outcome)
    return 0.5 * hx + 0.5 * hy - (hx - hy) ** 2 / (4.0 * g) - hmid


def make_shifted(base: ExpConcaveLoss, center: float, outcome: float) -> ShiftedLoss:
    if not base.contains(center):
        raise DomainError(f"{base.name}: center {center} outside domain {base.domain}")
    return ShiftedLoss(base=base, center=float(center), outcome=float(outcome))


def clip(z, l: float):
    """Project onto ``[-l, l]``."""
    if not l > 0:
        raise DomainError(f"clip level must be positive, got {l}")
    out = np.clip(z, -l, l)
    return float(out) if np.ndim(out) == 0 else out


def smoothed_log_loss(p, p0, mu):
    """``-log((1 - mu) p + mu p0)``."""
    p = np.asarray(p, dtype=float)
    p0 = np.asarray(p0, dtype=float)
    if np.any(p < 0) or np.any(p0 <= 0):
        raise DomainError("smoothed log-loss needs p >= 0 and p0 > 0")
    if not 0.0 <= mu <= 0.5:
        raise DomainError(f"mu must lie in [0, 1/2], got {mu}")
    mix = (1.0 - mu) * p + mu * p0
    if np.any(mix <= 0):
        raise DomainError("smoothed density is not positive")
    out = -np.log(mix)
    return float(out) if out.ndim == 0 else out


def clip_inequality_residuals(z, y, l: float):
    """Both clipping gaps that must be nonpositive for ``|y| <= l``.

    First: ``(clip(z) - y)**2 - (z - y)**2``.
    Second: ``(clip(z) - y)**2 - (clip(z)/2 + z/2 - y)**2``.
    """
    z = np.asarray(z, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.any(np.abs(y) > l):
        raise DomainError(f"outcome outside [-{l}, {l}]")
    c = np.clip(z, -l, l)
    first = (c - y) ** 2 - (z - y) ** 2
    second = (c - y) ** 2 - (0.5 * c + 0.5 * z - y) ** 2
    if first.ndim == 0:
        return float(first), float(second)
    return first, second


# -- verification helpers ---------------------------------------------------


def _interior_grid(domain, n):
    lo, hi = domain
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("grid checks need a bounded domain")
    return np.linspace(lo, hi, n + 2)[1:-1]


def exp_concavity_violation(loss, outcomes, n_grid: int = EXP_CONCAVITY_GRID) -> float:
    """Largest ``alpha h'^2 - h''`` over an interior grid, scaled by ``max(1, |h''|)``."""
    if loss.d1 is None or loss.d2 is None:
        raise NotImplementedError(f"{loss.name} lacks analytic derivatives")
    w = _interior_grid(loss.domain, n_grid)
    worst = -math.inf
    for y in np.atleast_1d(outcomes):
        g1 = loss.d1(w, np.asarray(y, dtype=float))
        g2 = loss.d2(w, np.asarray(y, dtype=float))
        gap = (loss.alpha * g1**2 - g2) / np.maximum(1.0, np.abs(g2))
        worst = max(worst, float(np.max(gap)))
    return worst


def check_exp_concavity(loss, outcomes, n_grid: int = EXP_CONCAVITY_GRID, tol: float = EXP_CONCAVITY_TOL) -> bool:
    return exp_concavity_violation(loss, outcomes, n_grid) <= tol


def observed_range(loss, outcomes, n_grid: int = EXP_CONCAVITY_GRID) -> float:
    """Max over outcomes of ``max_w h - min_w h`` on the closed domain grid."""
    lo, hi = loss.domain
    w = np.linspace(lo, hi, n_grid)
    spans = [np.ptp(loss(w, y)) for y in np.atleast_1d(outcomes)]
    return float(max(spans))


def finite_difference_errors(loss, w, y, step: float = 1e-5):
    """Relative errors of analytic ``d1``/``d2`` against central differences.

    ``d1`` is checked against differences of ``value``; ``d2`` against
    differences of the analytic ``d1``.
    """
    w = np.asarray(w, dtype=float)
    y = np.asarray(y, dtype=float)
    fd1 = (loss.value(w + step, y) - loss.value(w - step, y)) / (2 * step)
    fd2 = (loss.d1(w + step, y) - loss.d1(w - step, y)) / (2 * step)
    a1 = loss.d1(w, y)
    a2 = loss.d2(w, y)
    e1 = np.abs(fd1 - a1) / np.maximum(1.0, np.abs(a1))
    e2 = np.abs(fd2 - a2) / np.maximum(1.0, np.abs(a2))
    return e1, e2


# -- loss families ----------------------------------------------------------


def squared_loss(lo: float, hi: float, y_lo: float | None = None, y_hi: float | None = None) -> ExpConcaveLoss:
    """``(w - y)**2`` for ``w`` in ``[lo, hi]`` and ``y`` in ``[y_lo, y_hi]``.

    With ``D = max |w - y|`` over the box the loss is ``1/(2 D^2)``-exp-concave
    and its values differ by at most ``D^2``.
    """
    y_lo = lo if y_lo is None else y_lo
    y_hi = hi if y_hi is None else y_hi
    span = max(abs(hi - y_lo), abs(y_hi - lo))
    return ExpConcaveLoss(
        name="squared",
        alpha=1.0 / (2.0 * span**2),
        m=span**2,
        value=lambda w, y: (w - y) ** 2,
        d1=lambda w, y: 2.0 * (w - y),
        d2=lambda w, y: np.full(np.broadcast(w, y).shape, 2.0),
        domain=(float(lo), float(hi)),
        params={"y_range": (y_lo, y_hi)},
    )


def clipped_squared_loss(l: float) -> ExpConcaveLoss:
    """Squared loss on ``[-l, l]^2``: ``alpha = 1/(8 l^2)``, ``m = 4 l^2``."""
    return squared_loss(-l, l, -l, l)


def log_loss(p_min: float, p_max: float = 1.0) -> ExpConcaveLoss:
    """Raw ``-log(w)`` on ``[p_min, p_max]``; refuses ``w <= 0``."""
    if not 0 < p_min < p_max:
        raise DomainError("log-loss needs 0 < p_min < p_max")

    def value(w, y):
        if np.any(w <= 0):
            raise DomainError("raw log-loss is undefined for p <= 0; use the smoothed loss")
        return -np.log(w)

    return ExpConcaveLoss(
        name="log",
        alpha=1.0,
        m=math.log(p_max / p_min),
        value=value,
        d1=lambda w, y: -1.0 / w,
        d2=lambda w, y: 1.0 / w**2,
        domain=(float(p_min), float(p_max)),
    )


def smoothed_log_loss_family(
    mu: float, p_max: float, p0_min: float, p0_max: float | None = None, m: float | None = None
) -> ExpConcaveLoss:
    """``h(w, p0) = -log((1 - mu) w + mu p0)`` for densities ``w`` in ``[0, p_max]``.

    The outcome slot carries the reference density ``p0(Y_t | X_t)``. ``m``
    defaults to the full range over the domain at ``p0_min``; pass a tighter
    value when only part of the domain is reachable by the reference class.
    """
    if not 0 < mu <= 0.5:
        raise DomainError(f"smoothing needs 0 < mu <= 1/2, got {mu}")
    p0_max = p0_min if p0_max is None else p0_max
    a = 1.0 - mu
    if m is None:
        m = math.log((a * p_max + mu * p0_min) / (mu * p0_min))
    return ExpConcaveLoss(
        name="smoothed-log",
        alpha=1.0,
        m=m,
        value=lambda w, p0: -np.log(a * w + mu * p0),
        d1=lambda w, p0: -a / (a * w + mu * p0),
        d2=lambda w, p0: a**2 / (a * w + mu * p0) ** 2,
        domain=(0.0, float(p_max)),
        params={"mu": mu, "p0_range": (p0_min, p0_max)},
    )


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def logistic_nll(z_bound: float) -> ExpConcaveLoss:
    """Bernoulli negative log-likelihood in the linear predictor ``z``.

    On ``|z| <= z_bound`` it is ``exp(-z_bound)``-exp-concave.
    """
    def value(z, y):
        return -y * _log_sigmoid(z) - (1.0 - y) * _log_sigmoid(-z)

    def d1(z, y):
        return 1.0 / (1.0 + np.exp(-z)) - y

    def d2(z, y):
        s = 1.0 / (1.0 + np.exp(-z))
        return s * (1.0 - s) + 0.0 * y

    m = float(np.log1p(np.exp(z_bound)) - np.log1p(np.exp(-z_bound)))
    return ExpConcaveLoss(
        name="logistic-nll",
        alpha=math.exp(-z_bound),
        m=m,
        value=value,
        d1=d1,
        d2=d2,
        domain=(-float(z_bound), float(z_bound)),
    )
