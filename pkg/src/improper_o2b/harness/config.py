"""Experiment configuration stored as TOML.

Layout::

    experiment = "discrete"
    replications = 2000
    delta = 0.05
    seed = 0
    output = "out/discrete"

    [model]
    d = 2
    T = 200
    p_star = [0.3, 0.7]      # omitted -> drawn per replication

    [backend]
    name = "dense-grid"
    grid_resolution = 801

    [options]                # experiment-specific extras
    trials = 10000
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields

import tomli
import tomli_w

from ..posterior import ConfigurationError, IntegratorConfig

__all__ = ["EXPERIMENTS", "ModelParams", "BackendParams", "ExperimentConfig", "parse_config", "load_config", "dump_config"]

EXPERIMENTS = (
    "aggregation",
    "logistic",
    "gaussian-glm",
    "discrete",
    "linreg-ewa",
    "linreg-vaw",
    "freedman",
    "lemma-suite",
)


@dataclass(frozen=True)
class ModelParams:
    d: int = 1
    T: int = 100
    r: float = 1.0
    b: float = 1.0
    l: float = 1.0
    p_star: tuple | None = None
    theta_star: tuple | None = None
    noise: float | None = None
    misspecified: bool = False
    replay: str | None = None
    mu: float | None = None
    K: int | None = None


@dataclass(frozen=True)
class BackendParams:
    name: str | None = None
    grid_resolution: int | None = None
    grid_halfwidth: float | None = None
    mcmc_steps: int | None = None
    burn_in: int | None = None
    proposal_scale: float | None = None
    n_chains: int | None = None

    def integrator(self, default_resolution: int | None = None) -> IntegratorConfig:
        kw = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "name" and getattr(self, f.name) is not None}
        if "grid_resolution" not in kw and default_resolution is not None:
            kw["grid_resolution"] = default_resolution
        return IntegratorConfig(**kw)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    model: ModelParams = field(default_factory=ModelParams)
    replications: int = 100
    delta: float = 0.05
    seed: int = 0
    backend: BackendParams = field(default_factory=BackendParams)
    output: str | None = None
    risk_samples: int = 20000
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigurationError(f"unknown experiment {self.experiment!r}; choose from {EXPERIMENTS}")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")
        if not 0.0 < self.delta < 1.0:
            raise ConfigurationError("delta must lie in (0, 1)")
        m = self.model
        if m.T < 1 or m.d < 1:
            raise ConfigurationError("T and d must be >= 1")
        for name in ("r", "b", "l"):
            if not getattr(m, name) > 0:
                raise ConfigurationError(f"{name} must be positive")
        if m.p_star is not None:
            if len(m.p_star) != m.d or any(v < 0 for v in m.p_star) or not math.isclose(sum(m.p_star), 1.0, abs_tol=1e-12):
                raise ConfigurationError("p_star must be a probability vector of length d")
        if m.theta_star is not None:
            if len(m.theta_star) != m.d:
                raise ConfigurationError("theta_star must have length d")
            if math.sqrt(sum(t * t for t in m.theta_star)) > m.b * (1 + 1e-12):
                raise ConfigurationError("theta_star lies outside the comparator ball of radius b")
        if m.mu is not None and not 0.0 <= m.mu <= 0.5:
            raise ConfigurationError("mu must lie in [0, 1/2]")
        if self.experiment == "discrete" and not 2 <= m.d <= 4:
            raise ConfigurationError("discrete estimation supports 2 <= d <= 4")
        if self.experiment in ("logistic", "gaussian-glm", "linreg-ewa") and m.d > 8:
            raise ConfigurationError("EWA backends support d <= 8")


def _drop_none(d: dict) -> dict:
    out = {}
    for k, v in d.items():
        if v is None:
            continue
        if isinstance(v, dict):
            v = _drop_none(v)
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def dump_config(cfg: ExperimentConfig) -> str:
    return tomli_w.dumps(_drop_none(asdict(cfg)))


def _build(cls, table: dict, where: str):
    names = {f.name for f in fields(cls)}
    unknown = set(table) - names
    if unknown:
        raise ConfigurationError(f"unknown keys in {where}: {sorted(unknown)}")
    return {k: tuple(v) if isinstance(v, list) else v for k, v in table.items()}


def parse_config(text: str) -> ExperimentConfig:
    try:
        raw = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigurationError(f"invalid TOML: {exc}") from exc
    raw = dict(raw)
    model = ModelParams(**_build(ModelParams, raw.pop("model", {}), "[model]"))
    backend = BackendParams(**_build(BackendParams, raw.pop("backend", {}), "[backend]"))
    options = raw.pop("options", {})
    top = _build(ExperimentConfig, raw, "top level")
    if "experiment" not in top:
        raise ConfigurationError("missing 'experiment'")
    try:
        return ExperimentConfig(model=model, backend=backend, options=options, **top)
    except TypeError as exc:
        raise ConfigurationError(str(exc)) from exc


def load_config(path) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())
