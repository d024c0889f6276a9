"""Bounded linear regression: clipped EWA with a Gaussian prior and the
clipped Vovk-Azoury-Warmuth forecaster on shifted targets."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..losses import DomainError, clip, clipped_squared_loss
from ..o2b import AveragedPredictor, average_predictor, run
from ..posterior import ConfigurationError, GaussianIsotropic, IntegratorConfig, init_posterior
from .ewa import EwaLearner
from .glm import DEFAULT_GRID_RESOLUTION

__all__ = [
    "LinRegConfig",
    "VawNumericalError",
    "VawSnapshot",
    "VawState",
    "init_vaw",
    "vaw_update",
    "vaw_average_predict",
    "VawLearner",
    "linreg_vaw",
    "linreg_ewa",
    "linreg_learner",
]

MODES = ("ewa-clipped", "vaw-clipped")


@dataclass(frozen=True)
class LinRegConfig:
    """Covariate bound ``r``, outcome bound ``l``, comparator radius ``b``.

    ``sigma2`` defaults to ``b^2/d`` (EWA) or ``b^2/(d l^2)`` (VAW).
    """

    d: int
    r: float
    l: float
    b: float
    sigma2: float | None = None
    mode: str = "vaw-clipped"

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}, got {self.mode!r}")
        if not (self.r > 0 and self.l > 0 and self.b > 0 and self.d >= 1):
            raise DomainError("r, l, b must be positive and d >= 1")
        if self.sigma2 is not None and not self.sigma2 > 0:
            raise DomainError("sigma2 must be positive")

    @property
    def prior_variance(self) -> float:
        if self.sigma2 is not None:
            return self.sigma2
        if self.mode == "ewa-clipped":
            return self.b**2 / self.d
        return self.b**2 / (self.d * self.l**2)


class VawNumericalError(ArithmeticError):
    def __init__(self, round_index: int, detail: str):
        super().__init__(f"VAW inverse audit failed at round {round_index}: {detail}")
        self.round_index = round_index


@dataclass(frozen=True)
class VawSnapshot:
    """``(S_t^{-1}, b_t)`` before round ``t``; predicts with the query's own
    ``xx^T/4`` folded in."""

    inv_gram: np.ndarray
    vec: np.ndarray
    l: float

    def raw(self, queries) -> np.ndarray:
        x = np.atleast_2d(np.asarray(queries, dtype=float))
        ax = x @ self.inv_gram
        u = ax @ self.vec
        q = np.einsum("ij,ij->i", ax, x)
        return u / (1.0 + 0.25 * q)

    def predict(self, queries) -> np.ndarray:
        return clip(self.raw(queries), self.l)


@dataclass
class VawState:
    """Mutable VAW statistics: ``inv_gram = (sum X X^T/4 + I/sigma2)^{-1}``,
    ``vec = sum Ytilde X / 2``; ``gram`` is kept for audits."""

    inv_gram: np.ndarray
    vec: np.ndarray
    gram: np.ndarray
    l: float
    audit_every: int = 50
    audit_tol: float = 1e-8
    t: int = 0
    snapshots: list = field(default_factory=list)
    targets: list = field(default_factory=list)

    def snapshot(self) -> VawSnapshot:
        return VawSnapshot(self.inv_gram.copy(), self.vec.copy(), self.l)

    def predict(self, x) -> float:
        return float(self.snapshot_view().predict(x)[0])

    def snapshot_view(self) -> VawSnapshot:
        return VawSnapshot(self.inv_gram, self.vec, self.l)

    def audit(self) -> float:
        """Max deviation of ``inv_gram @ gram`` from the identity."""
        d = len(self.vec)
        return float(np.max(np.abs(self.inv_gram @ self.gram - np.eye(d))))


def init_vaw(d: int, sigma2: float, l: float, audit_every: int = 50) -> VawState:
    if not sigma2 > 0:
        raise DomainError("sigma2 must be positive")
    return VawState(
        inv_gram=np.eye(d) * sigma2,
        vec=np.zeros(d),
        gram=np.eye(d) / sigma2,
        l=float(l),
        audit_every=audit_every,
    )


def vaw_update(state: VawState, x, y: float) -> VawState:
    """One round: snapshot, predict ``clip(theta_t(x)^T x)``, then absorb
    ``xx^T/4`` by Sherman-Morrison and ``Ytilde x / 2`` into ``vec``."""
    x = np.asarray(x, dtype=float)
    l = state.l
    if abs(y) > l * (1 + 1e-12):
        raise DomainError(f"|y| = {abs(y)} exceeds l = {l}")
    snap = state.snapshot()
    pred = float(snap.predict(x)[0])
    ytilde = y - 0.5 * pred
    z = 0.5 * x
    az = state.inv_gram @ z
    state.inv_gram = state.inv_gram - np.outer(az, az) / (1.0 + z @ az)
    state.gram = state.gram + np.outer(z, z)
    state.vec = state.vec + 0.5 * ytilde * x
    state.t += 1
    state.snapshots.append(snap)
    state.targets.append(ytilde)
    if state.audit_every and state.t % state.audit_every == 0:
        err = state.audit()
        if not err <= state.audit_tol:
            raise VawNumericalError(state.t, f"|A S - I|_max = {err:.3g}")
    return state


def vaw_average_predict(snapshots, queries, l: float) -> np.ndarray:
    """``(1/n) sum_t clip(theta_t(x)^T x)`` over the given snapshots."""
    if len(snapshots) == 0:
        raise ConfigurationError("no snapshots to average")
    x = np.atleast_2d(np.asarray(queries, dtype=float))
    A = np.stack([s.inv_gram for s in snapshots])
    v = np.stack([s.vec for s in snapshots])
    ax = np.matmul(x, A)  # (n, m, d)
    u = np.matmul(ax, v[:, :, None])[..., 0]
    q = (ax * x).sum(axis=-1)
    return clip(u / (1.0 + 0.25 * q), l).mean(axis=0)


class _VawAverage(AveragedPredictor):
    def __init__(self, snapshots, l, trajectory=None):
        super().__init__(snapshots, trajectory=trajectory)
        self.l = l

    def predict(self, queries) -> np.ndarray:
        return vaw_average_predict(self.snapshots, queries, self.l)

    __call__ = predict


class VawLearner:
    """Clipped VAW as an o2b learner scored by the clipped squared loss."""

    def __init__(self, config: LinRegConfig, audit_every: int = 50):
        self.config = config
        self.loss = clipped_squared_loss(config.l)
        self.state = init_vaw(config.d, config.prior_variance, config.l, audit_every)

    def query(self, x, y):
        return np.atleast_1d(np.asarray(x, dtype=float))

    def loss_outcome(self, x, y):
        return float(y)

    def center(self, q) -> float:
        return self.state.predict(q)

    def snapshot(self) -> VawSnapshot:
        return self.state.snapshot()

    def update(self, x, y, center):
        vaw_update(self.state, x, y)


def linreg_vaw(stream, config: LinRegConfig, audit_every: int = 50) -> AveragedPredictor:
    learner = VawLearner(config, audit_every)
    traj = run(stream, learner)
    return _VawAverage(learner.state.snapshots, config.l, trajectory=traj)


def linreg_learner(config: LinRegConfig, backend: str | None = None, integrator: IntegratorConfig | None = None, seed: int = 0) -> EwaLearner:
    d, l = config.d, config.l
    if backend is None:
        backend = "dense-grid" if d in DEFAULT_GRID_RESOLUTION else "metropolis"
    if integrator is None:
        integrator = IntegratorConfig(grid_resolution=DEFAULT_GRID_RESOLUTION.get(d, 2))
    loss = clipped_squared_loss(l)

    def predict_map(nodes, queries):
        return clip(nodes @ queries.T, l)

    state = init_posterior(GaussianIsotropic(config.prior_variance, d), loss.alpha, predict_map, backend=backend, config=integrator, seed=seed)
    return EwaLearner(state, loss)


def linreg_ewa(stream, config: LinRegConfig, backend: str | None = None, integrator: IntegratorConfig | None = None, seed: int = 0) -> AveragedPredictor:
    """``ybar(x) = (1/T) sum_t E_{P_t} clip(theta^T x)`` with EWA at rate ``1/(8 l^2)``."""
    if config.mode != "ewa-clipped":
        raise ConfigurationError("linreg_ewa needs mode='ewa-clipped'")
    traj = run(stream, linreg_learner(config, backend, integrator, seed))
    return average_predictor(traj)
