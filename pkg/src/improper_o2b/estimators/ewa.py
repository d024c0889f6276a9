"""Generic exponential-weights learner on shifted losses."""

from __future__ import annotations

from typing import Callable

import numpy as np

from ..losses import ExpConcaveLoss, make_shifted
from ..posterior import PosteriorState, ewa_update, mean_prediction


def _covariate_row(x, y):
    return np.atleast_1d(np.asarray(x, dtype=float))


def _raw_outcome(x, y):
    return float(y)


class EwaLearner:
    """EWA at rate ``state.alpha`` on ``loss(f(q)/2 + f_t(q)/2, outcome)``.

    ``query_fn`` and ``outcome_fn`` map a raw ``(x, y)`` pair onto the query
    row and the loss outcome slot (defaults: ``x`` and ``y``).
    """

    def __init__(
        self,
        state: PosteriorState,
        loss: ExpConcaveLoss,
        query_fn: Callable = _covariate_row,
        outcome_fn: Callable = _raw_outcome,
        declared_m: float | None = None,
        spread_fn: Callable | None = None,
    ):
        self.state = state
        self.loss = loss
        self._query = query_fn
        self._outcome = outcome_fn
        self.declared_m = declared_m
        if spread_fn is not None:
            self.loss_spread = spread_fn

    def query(self, x, y):
        return self._query(x, y)

    def loss_outcome(self, x, y):
        return self._outcome(x, y)

    def center(self, query) -> float:
        return mean_prediction(self.state, query)

    def snapshot(self) -> PosteriorState:
        return self.state

    def update(self, x, y, center):
        shifted = make_shifted(self.loss, center, self.loss_outcome(x, y))
        self.state = ewa_update(self.state, shifted, self.query(x, y))
