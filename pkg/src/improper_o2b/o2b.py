"""Online-to-batch driver: predict-then-update runs on shifted losses.

A learner is any object with

* ``loss`` - the :class:`~improper_o2b.losses.ExpConcaveLoss` it is scored by,
* ``query(x, y)`` - the row its predictors are evaluated at (``x`` for
  regression, ``(x, y)`` for conditional densities, the symbol for discrete
  distributions),
* ``loss_outcome(x, y)`` - the outcome slot passed to ``loss``,
* ``center(query)`` - its current prediction ``f_t(query)``,
* ``update(x, y, center)`` - absorb round ``t``,
* ``snapshot()`` - an object with ``predict(query_rows)`` frozen at round ``t``.

Learners may also expose ``loss_spread(query, outcome, center)`` returning the
largest ``|loss(center) - loss(f(query))|`` over the reference class; the
driver records it and flags rounds exceeding the declared ``m``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Sequence

import numpy as np

from .losses import ExpConcaveLoss
from .posterior import ConfigurationError, PosteriorState

__all__ = [
    "LearnerError",
    "Round",
    "OnlineTrajectory",
    "AveragedPredictor",
    "run",
    "shifted_regret",
    "average_predictor",
    "half_suffix_start",
]

log = logging.getLogger(__name__)


class LearnerError(RuntimeError):
    """A learner update failed; ``round_index`` is 1-based."""

    def __init__(self, round_index: int, cause: BaseException):
        super().__init__(f"learner update failed at round {round_index}: {cause}")
        self.round_index = round_index


@dataclass
class Round:
    x: Any
    y: Any
    query: np.ndarray
    loss_outcome: float
    center: float
    snapshot: Any
    incurred: float
    spread: float = float("nan")


@dataclass
class OnlineTrajectory:
    loss: ExpConcaveLoss
    rounds: list = field(default_factory=list)
    suffix_start: int = 1
    declared_m: float | None = None
    flags: dict = field(default_factory=dict)

    @property
    def T(self) -> int:
        return len(self.rounds)

    @property
    def centers(self) -> np.ndarray:
        return np.array([r.center for r in self.rounds])

    @property
    def queries(self) -> np.ndarray:
        return np.vstack([np.atleast_2d(r.query) for r in self.rounds])

    @property
    def outcomes(self) -> np.ndarray:
        return np.array([r.loss_outcome for r in self.rounds])

    @property
    def incurred(self) -> np.ndarray:
        """Per-round ``loss(f_t(X_t), Y_t)``; the shifted loss at ``f = f_t``."""
        return np.array([r.incurred for r in self.rounds])

    @property
    def m_observed(self) -> float:
        spreads = np.array([r.spread for r in self.rounds])
        spreads = spreads[~np.isnan(spreads)]
        return float(spreads.max()) if spreads.size else float("nan")

    @property
    def m_exceeded(self) -> bool:
        """True when some round broke the declared bound on loss differences."""
        m = self.loss.m if self.declared_m is None else self.declared_m
        return bool(self.m_observed > m) if np.isfinite(self.m_observed) else False


class AveragedPredictor:
    """Arithmetic mean of per-round snapshot predictors.

    When every snapshot is a grid posterior over the same support the mean of
    posterior means equals the mean under averaged weights, which is what is
    evaluated.
    """

    def __init__(self, snapshots: Sequence, transform: Callable | None = None, trajectory=None):
        if len(snapshots) == 0:
            raise ConfigurationError("averaging window is empty")
        self.snapshots = list(snapshots)
        self.transform = transform
        self.trajectory = trajectory
        self._mean_weights = None
        first = self.snapshots[0]
        if isinstance(first, PosteriorState) and first.backend != "metropolis":
            if all(s.nodes is first.nodes for s in self.snapshots):
                self._mean_weights = np.mean([s.weights for s in self.snapshots], axis=0)

    @property
    def window(self) -> int:
        return len(self.snapshots)

    def predict(self, queries) -> np.ndarray:
        q = np.atleast_2d(np.asarray(queries, dtype=float))
        if self._mean_weights is not None:
            out = self._mean_weights @ self.snapshots[0].predict_map(self.snapshots[0].nodes, q)
        else:
            out = np.mean([s.predict(q) for s in self.snapshots], axis=0)
        return out if self.transform is None else self.transform(out, q)

    __call__ = predict


def run(stream: Iterable, learner, suffix_start: int = 1) -> OnlineTrajectory:
    """Drive ``learner`` over ``(X_t, Y_t)`` pairs in order.

    Each round records the snapshot and center *before* the update that
    consumes ``(X_t, Y_t)``, so round ``t`` depends only on rounds ``< t``.
    """
    traj = OnlineTrajectory(loss=learner.loss, declared_m=getattr(learner, "declared_m", None))
    spread_fn = getattr(learner, "loss_spread", None)
    for t, (x, y) in enumerate(stream, start=1):
        q = np.asarray(learner.query(x, y), dtype=float)
        outcome = learner.loss_outcome(x, y)
        snap = learner.snapshot()
        center = float(learner.center(q))
        incurred = float(learner.loss(center, outcome))
        spread = float(spread_fn(q, outcome, center)) if spread_fn is not None else float("nan")
        try:
            learner.update(x, y, center)
        except Exception as exc:  # noqa: BLE001 - re-raised with the round index
            raise LearnerError(t, exc) from exc
        traj.rounds.append(Round(x, y, q, outcome, center, snap, incurred, spread))
    if traj.T == 0:
        raise ConfigurationError("stream is empty")
    if not 1 <= suffix_start <= traj.T:
        raise ConfigurationError(f"suffix_start must lie in [1, {traj.T}], got {suffix_start}")
    traj.suffix_start = suffix_start
    if traj.m_exceeded:
        log.warning("observed loss spread %.4g exceeds declared m; risk bound inapplicable", traj.m_observed)
    return traj


def _comparator_predictions(traj: OnlineTrajectory, comparator) -> np.ndarray:
    if callable(comparator):
        return np.atleast_2d(np.asarray(comparator(traj.queries), dtype=float).reshape(-1))
    if isinstance(comparator, np.ndarray) or (
        isinstance(comparator, (list, tuple)) and comparator and not callable(comparator[0])
    ):
        return np.atleast_2d(np.asarray(comparator, dtype=float))
    return np.vstack([np.asarray(f(traj.queries), dtype=float).reshape(-1) for f in comparator])


def shifted_regret(traj: OnlineTrajectory, comparator, weights=None) -> float:
    """``sum_t [loss(f_t) - E_{f~Q} loss(f/2 + f_t/2)]`` over the trajectory.

    ``comparator`` is a predictor callable (point mass), a list of callables,
    or precomputed per-round predictions of shape ``(K, T)`` or ``(T,)``;
    ``weights`` is the mixing distribution ``Q`` over those components.
    """
    preds = _comparator_predictions(traj, comparator)
    if preds.shape[1] != traj.T:
        raise ValueError(f"comparator gives {preds.shape[1]} predictions for {traj.T} rounds")
    w = np.full(len(preds), 1.0 / len(preds)) if weights is None else np.asarray(weights, dtype=float)
    centers = traj.centers
    shifted = traj.loss(0.5 * preds + 0.5 * centers[None, :], traj.outcomes[None, :])
    return float(np.sum(traj.incurred) - np.sum(w @ shifted))


def half_suffix_start(T: int) -> int:
    """First round of the second half; odd ``T`` rounds the split down."""
    return T // 2 + 1


def average_predictor(traj: OnlineTrajectory, transform: Callable | None = None) -> AveragedPredictor:
    """Mean of snapshots from ``traj.suffix_start`` to ``T``."""
    snaps = [r.snapshot for r in traj.rounds[traj.suffix_start - 1:]]
    return AveragedPredictor(snaps, transform=transform, trajectory=traj)
