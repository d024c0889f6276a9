"""Model-selection aggregation over a finite dictionary."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..losses import ExpConcaveLoss
from ..o2b import AveragedPredictor, average_predictor, run
from ..posterior import ConfigurationError, FiniteUniform, init_posterior
from .ewa import EwaLearner


def dictionary_map(dictionary: Sequence[Callable]):
    """Prediction map for expert indices.

    Each dictionary function receives an ``(n, p)`` array of covariate rows
    and returns ``n`` predictions.
    """
    funcs = list(dictionary)

    def predict_map(nodes, queries):
        idx = nodes[:, 0].astype(int)
        return np.vstack([np.asarray(funcs[k](queries), dtype=float).reshape(-1) for k in idx])

    return predict_map


def aggregation_learner(dictionary: Sequence[Callable], loss: ExpConcaveLoss) -> EwaLearner:
    if len(dictionary) == 0:
        raise ConfigurationError("dictionary is empty")
    state = init_posterior(FiniteUniform(len(dictionary)), loss.alpha, dictionary_map(dictionary))
    return EwaLearner(state, loss)


def aggregate_finite(dictionary: Sequence[Callable], stream, loss: ExpConcaveLoss) -> AveragedPredictor:
    """Average of EWA posterior-mean predictors under a uniform prior.

    The returned predictor carries the run in ``.trajectory``; its shifted
    regret against any expert is at most ``log(K) / alpha``.
    """
    learner = aggregation_learner(dictionary, loss)
    traj = run(stream, learner)
    return average_predictor(traj)
