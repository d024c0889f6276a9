"""Monte-Carlo replication of the estimators against their risk bounds."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path

import numpy as np

from ..analysis import (
    BoundParams,
    RiskReport,
    bound_aggregation,
    bound_discrete,
    bound_glm,
    bound_linreg,
    centered_bernoulli_differences,
    excess_risk_quantiles,
    freedman_check,
    freedman_tolerance,
    glm_bound_before_mu,
    rademacher_differences,
)
from ..estimators import (
    DiscreteDistConfig,
    LinRegConfig,
    aggregation_learner,
    conditional_density_estimator,
    discrete_dist_estimator,
    gaussian_linmodel_spec,
    linreg_ewa,
    linreg_vaw,
    logistic_spec,
)
from ..estimators.glm import DEFAULT_GRID_RESOLUTION
from ..losses import squared_loss
from ..o2b import average_predictor, run, shifted_regret
from ..posterior import ConfigurationError
from .config import ExperimentConfig
from .models import (
    BoundedRegression,
    GaussianLinModel,
    Logistic,
    Multinomial,
    constrained_least_squares,
    excess_risk,
    generate,
    uniform_ball,
)

__all__ = ["CSV_COLUMNS", "ExperimentError", "ExperimentResult", "replicate", "run_experiment", "experiment_bound", "format_float", "rows_to_csv"]

log = logging.getLogger(__name__)

CSV_COLUMNS = ("replication", "seed", "excess_risk", "regret", "m_observed", "flags")
MAX_FAILURE_RATE = 0.01


class ExperimentError(RuntimeError):
    pass


def format_float(v) -> str:
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return format(float(v), ".17g")


def rows_to_csv(rows, columns=CSV_COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([v if isinstance(v, str) else format_float(v) for v in (row[c] for c in columns)])
    return buf.getvalue()


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    summary: dict
    report: RiskReport | None = None
    failures: list = field(default_factory=list)
    csv_text: str = ""


# -- per-experiment pieces -------------------------------------------------------


def _param_rng(seed: int) -> np.random.Generator:
    # parameter draws use a stream disjoint from the data stream of the same seed
    return np.random.default_rng([seed, 1])


def _risk_seed(seed: int):
    return [seed, 2]


def _theta(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    m = cfg.model
    if m.theta_star is not None:
        return np.asarray(m.theta_star, dtype=float)
    return uniform_ball(_param_rng(seed), 1, m.d, m.b)[0]


def _p_star(cfg: ExperimentConfig, seed: int) -> np.ndarray:
    m = cfg.model
    if m.p_star is not None:
        return np.asarray(m.p_star, dtype=float)
    # bounded away from the simplex boundary
    p = 0.5 * _param_rng(seed).dirichlet(np.full(m.d, 2.0)) + 0.5 / m.d
    return p / p.sum()


def _noise(cfg: ExperimentConfig) -> float:
    return 0.5 * cfg.model.l if cfg.model.noise is None else cfg.model.noise


def _integrator(cfg: ExperimentConfig):
    return cfg.backend.integrator(DEFAULT_GRID_RESOLUTION.get(cfg.model.d, 2))


def _glm_spec(cfg: ExperimentConfig):
    m = cfg.model
    if cfg.experiment == "logistic":
        spec = logistic_spec(m.r, m.b, m.d, m.T)
    else:
        spec = gaussian_linmodel_spec(m.r, m.b, m.d, m.T, cfg.delta)
    if m.mu is not None:
        spec = replace(spec, mu=m.mu, m=math.log(2.0 / m.mu) if cfg.experiment == "gaussian-glm" else spec.m)
    return spec


def experiment_bound(cfg: ExperimentConfig) -> tuple[float | None, float]:
    """``(bound, quantile level)`` for the experiment."""
    m, delta = cfg.model, cfg.delta
    if cfg.experiment == "discrete":
        return bound_discrete(m.d, m.T, delta), 1.0 - 2.0 * delta
    if cfg.experiment == "logistic":
        spec = _glm_spec(cfg)
        return bound_glm(BoundParams(T=m.T, delta=delta, d=m.d, kappa=spec.kappa, r=m.r, b=m.b, m=spec.m)), 1.0 - delta
    if cfg.experiment == "gaussian-glm":
        spec = _glm_spec(cfg)
        p = BoundParams(T=m.T, delta=delta, d=m.d, kappa=spec.kappa, r=m.r, b=m.b, m=spec.m, mu=spec.mu)
        return glm_bound_before_mu(p), 1.0 - delta
    if cfg.experiment in ("linreg-vaw", "linreg-ewa"):
        mode = "vaw-clipped" if cfg.experiment == "linreg-vaw" else "ewa-clipped"
        return bound_linreg(BoundParams(T=m.T, delta=delta, d=m.d, r=m.r, b=m.b, l=m.l), mode), 1.0 - delta
    if cfg.experiment == "aggregation":
        loss = squared_loss(-m.l, m.l)
        return bound_aggregation(m.K or 5, loss.alpha, loss.m, delta, m.T), 1.0 - delta
    return None, 1.0 - delta


def _constant(c, X):
    return np.full(len(np.atleast_2d(X)), c)


def _row(i, seed, excess, regret=float("nan"), m_observed=float("nan"), flags=()):
    return {
        "replication": i,
        "seed": seed,
        "excess_risk": float(excess),
        "regret": float(regret),
        "m_observed": float(m_observed),
        "flags": ";".join(flags),
    }


def replicate(cfg: ExperimentConfig, i: int) -> dict:
    """One replication with seed ``cfg.seed + i``."""
    seed = cfg.seed + i
    m = cfg.model
    exp = cfg.experiment

    if exp == "discrete":
        p_star = _p_star(cfg, seed)
        stream = generate(Multinomial(tuple(p_star)), m.T, seed)
        res = cfg.backend.grid_resolution or 1000
        fit = discrete_dist_estimator(stream.Y, DiscreteDistConfig(m.d, m.T, m.mu, res), return_fit=True)
        ex = excess_risk(fit.p, Multinomial(tuple(p_star)))
        regret = shifted_regret(fit.trajectory, lambda q: p_star[q[:, 0].astype(int)])
        flags = () if m.T > 4 * m.d else ("hypothesis",)
        return _row(i, seed, ex.value, regret, flags=flags)

    if exp in ("logistic", "gaussian-glm"):
        theta = _theta(cfg, seed)
        model = Logistic(tuple(theta), m.r) if exp == "logistic" else GaussianLinModel(tuple(theta), m.r)
        spec = _glm_spec(cfg)
        stream = generate(model, m.T, seed)
        pred = conditional_density_estimator(spec, stream, cfg.backend.name, _integrator(cfg), seed)
        traj = pred.trajectory
        ex = excess_risk(pred, model, n=cfg.risk_samples, seed=_risk_seed(seed))
        regret = shifted_regret(traj, lambda q: spec.density(q[:, : m.d] @ theta, q[:, m.d]))
        flags = [k for k in ("m_exceeded",) if traj.m_exceeded]
        if traj.flags.get("norm_violations"):
            flags.append("norm_violation")
        return _row(i, seed, ex.value, regret, traj.m_observed, flags)

    if exp in ("linreg-vaw", "linreg-ewa", "aggregation"):
        theta = _theta(cfg, seed)
        model = BoundedRegression(tuple(theta), m.r, m.l, _noise(cfg), m.misspecified)
        stream = generate(model, m.T, seed)
        dictionary = None
        if exp == "linreg-vaw":
            pred = linreg_vaw(stream, LinRegConfig(m.d, m.r, m.l, m.b, mode="vaw-clipped"))
        elif exp == "linreg-ewa":
            pred = linreg_ewa(stream, LinRegConfig(m.d, m.r, m.l, m.b, mode="ewa-clipped"), cfg.backend.name, _integrator(cfg), seed)
        else:
            dictionary = [partial(_constant, c) for c in np.linspace(-m.l, m.l, m.K or 5)]
            traj = run(stream, aggregation_learner(dictionary, squared_loss(-m.l, m.l)))
            pred = average_predictor(traj)
        traj = pred.trajectory
        if dictionary is not None:
            regret = max(shifted_regret(traj, f) for f in dictionary)
        elif m.misspecified:
            # comparator proxy: norm-constrained least squares on the stream
            comp = constrained_least_squares(stream.X, stream.Y, m.b)
            regret = shifted_regret(traj, lambda q: q @ comp)
        else:
            regret = shifted_regret(traj, lambda q: q @ theta)
        ex = excess_risk(pred, model, b=m.b, n=cfg.risk_samples, seed=_risk_seed(seed), dictionary=dictionary)
        flags = ("misspecified",) if m.misspecified else ()
        return _row(i, seed, ex.value, regret, traj.m_observed, flags)

    raise ConfigurationError(f"experiment {exp!r} has no replications")


def _safe_replicate(cfg: ExperimentConfig, i: int):
    try:
        return replicate(cfg, i), None
    except Exception as exc:  # noqa: BLE001 - failures are recorded and counted
        return None, {"replication": i, "seed": cfg.seed + i, "error": f"{type(exc).__name__}: {exc}"}


# -- special experiments -------------------------------------------------------


FREEDMAN_COLUMNS = ("generator", "R", "lambda", "delta", "trials", "T", "violation_rate", "tolerance", "passed")


def run_freedman(cfg: ExperimentConfig) -> tuple[list, dict]:
    opts = cfg.options
    trials = int(opts.get("trials", 10_000))
    T = cfg.model.T
    p = float(opts.get("bernoulli_p", 0.3))
    gens = {"rademacher": rademacher_differences(1.0), "bernoulli": centered_bernoulli_differences(p)}
    rows = []
    k = 0
    for name in opts.get("generators", ["rademacher", "bernoulli"]):
        gen = gens[name]
        for lam_scale in opts.get("lambdas", [0.2, 1.0]):
            for delta in opts.get("deltas", [0.05, 0.01]):
                lam = lam_scale / gen.R
                rate = freedman_check(gen, gen.R, lam, delta, trials, T, seed=cfg.seed + k)
                tol = freedman_tolerance(delta, trials)
                rows.append({
                    "generator": name, "R": gen.R, "lambda": lam, "delta": delta, "trials": trials,
                    "T": T, "violation_rate": rate, "tolerance": tol, "passed": str(rate <= tol).lower(),
                })
                k += 1
    return rows, {"all_passed": all(r["passed"] == "true" for r in rows)}


def _run_lemma_suite(cfg: ExperimentConfig) -> dict:
    from .acceptance import criterion_clip_smoothing, criterion_lemma1

    out = {}
    for fn in (criterion_lemma1, criterion_clip_smoothing):
        res = fn(seed=cfg.seed)
        out[res.name] = {"passed": res.passed, "detail": res.detail}
    return out


# -- driver --------------------------------------------------------------------------


def run_experiment(cfg: ExperimentConfig, workers: int = 1, out: str | Path | None = None) -> ExperimentResult:
    """Run all replications and write ``<out>/<experiment>.csv`` and ``.json``.

    Rows are ordered by replication index whatever the worker count.
    """
    out = out if out is not None else cfg.output
    start = time.perf_counter()
    if cfg.experiment == "freedman":
        rows, extra = run_freedman(cfg)
        text = rows_to_csv(rows, FREEDMAN_COLUMNS)
        summary = {"experiment": "freedman", **extra}
        result = ExperimentResult(cfg, rows, summary, csv_text=text)
    elif cfg.experiment == "lemma-suite":
        summary = {"experiment": "lemma-suite", "results": _run_lemma_suite(cfg)}
        result = ExperimentResult(cfg, [], summary)
    else:
        n = cfg.replications
        job = partial(_safe_replicate, cfg)
        if workers > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                outcomes = list(pool.map(job, range(n), chunksize=max(1, n // (4 * workers))))
        else:
            outcomes = [job(i) for i in range(n)]
        rows = [r for r, _ in outcomes if r is not None]
        failures = [f for _, f in outcomes if f is not None]
        for f in failures:
            log.warning("replication %d (seed %d) failed: %s", f["replication"], f["seed"], f["error"])
        if len(failures) > MAX_FAILURE_RATE * n:
            raise ExperimentError(f"{len(failures)} of {n} replications failed; first: {failures[0]['error']}")
        bound, level = experiment_bound(cfg)
        risks = np.array([r["excess_risk"] for r in rows])
        report = None
        if len(rows) >= 20:
            report = excess_risk_quantiles(risks, cfg.delta, bound=bound, level=level, seed=cfg.seed)
            report.seeds = [r["seed"] for r in rows]
        flagged = sum(1 for r in rows if "m_exceeded" in r["flags"])
        summary = {
            "experiment": cfg.experiment,
            "replications": n,
            "completed": len(rows),
            "failures": failures,
            "delta": cfg.delta,
            "bound": bound,
            "quantile_level": level,
            "quantile": None if report is None else report.quantile,
            "quantile_se": None if report is None else report.quantile_se,
            "violation_rate": None if bound is None else float(np.mean(risks > bound)),
            "median_excess_risk": float(np.median(risks)) if len(risks) else None,
            "mean_excess_risk": float(np.mean(risks)) if len(risks) else None,
            "m_flag_rate": flagged / max(1, len(rows)),
        }
        result = ExperimentResult(cfg, rows, summary, report, failures, rows_to_csv(rows))
    elapsed = time.perf_counter() - start
    result.summary["runtime_s"] = elapsed
    if result.report is not None:
        result.report.runtime = elapsed
    if out is not None:
        _write(result, Path(out))
    return result


def _write(result: ExperimentResult, out: Path):
    out.mkdir(parents=True, exist_ok=True)
    name = result.config.experiment
    if result.csv_text:
        (out / f"{name}.csv").write_text(result.csv_text, encoding="utf-8")
    (out / f"{name}.json").write_text(json.dumps(result.summary, indent=2, default=float) + "\n", encoding="utf-8")
