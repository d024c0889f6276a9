"""Concrete improper estimators built on the online-to-batch driver."""

from .aggregation import aggregate_finite, aggregation_learner, dictionary_map
from .discrete import DiscreteDistConfig, DiscreteFit, discrete_dist_estimator, laplace_estimator
from .ewa import EwaLearner
from .glm import (
    GlmSpec,
    conditional_density_estimator,
    gaussian_linmodel_spec,
    glm_learner,
    logistic_spec,
    select_mu,
)
from .linreg import (
    LinRegConfig,
    VawLearner,
    VawNumericalError,
    VawSnapshot,
    VawState,
    init_vaw,
    linreg_ewa,
    linreg_learner,
    linreg_vaw,
    vaw_average_predict,
    vaw_update,
)

__all__ = [
    "EwaLearner",
    "aggregate_finite",
    "aggregation_learner",
    "dictionary_map",
    "DiscreteDistConfig",
    "DiscreteFit",
    "discrete_dist_estimator",
    "laplace_estimator",
    "GlmSpec",
    "conditional_density_estimator",
    "gaussian_linmodel_spec",
    "glm_learner",
    "logistic_spec",
    "select_mu",
    "LinRegConfig",
    "VawLearner",
    "VawNumericalError",
    "VawSnapshot",
    "VawState",
    "init_vaw",
    "linreg_ewa",
    "linreg_learner",
    "linreg_vaw",
    "vaw_average_predict",
    "vaw_update",
]
