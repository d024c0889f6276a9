"""Experiment harness: data models, replication runner, acceptance suite, CLI."""

from .config import EXPERIMENTS, BackendParams, ExperimentConfig, ModelParams, dump_config, load_config, parse_config
from .experiment import CSV_COLUMNS, ExperimentError, ExperimentResult, replicate, run_experiment
from .models import (
    BoundedRegression,
    GaussianLinModel,
    LinearPredictor,
    Logistic,
    Multinomial,
    Replay,
    RiskEstimate,
    Stream,
    excess_risk,
    generate,
    true_risk,
)

__all__ = [
    "EXPERIMENTS",
    "BackendParams",
    "ExperimentConfig",
    "ModelParams",
    "dump_config",
    "load_config",
    "parse_config",
    "CSV_COLUMNS",
    "ExperimentError",
    "ExperimentResult",
    "replicate",
    "run_experiment",
    "BoundedRegression",
    "GaussianLinModel",
    "LinearPredictor",
    "Logistic",
    "Multinomial",
    "Replay",
    "RiskEstimate",
    "Stream",
    "excess_risk",
    "generate",
    "true_risk",
]
