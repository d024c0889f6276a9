import json
import math

import numpy as np
import pytest
from scipy import stats

from improper_o2b.analysis import entropy, kl_discrete
from improper_o2b.harness import cli
from improper_o2b.harness.config import BackendParams, ExperimentConfig, ModelParams, dump_config, load_config, parse_config
from improper_o2b.harness.experiment import CSV_COLUMNS, format_float, replicate, run_experiment
from improper_o2b.harness.models import (
    BoundedRegression,
    GaussianLinModel,
    LinearPredictor,
    Logistic,
    Multinomial,
    Replay,
    constrained_least_squares,
    excess_risk,
    generate,
    true_risk,
)
from improper_o2b.posterior import ConfigurationError


def small_discrete(**kw):
    base = dict(experiment="discrete", model=ModelParams(d=2, T=40), replications=3, seed=5, backend=BackendParams(grid_resolution=200))
    base.update(kw)
    return ExperimentConfig(**base)


class TestConfig:
    def test_round_trip(self):
        cfg = ExperimentConfig(
            "linreg-vaw",
            ModelParams(d=2, T=500, r=1.0, b=2.0, l=1.0, theta_star=(0.5, -1.0)),
            replications=10,
            delta=0.1,
            seed=3,
            backend=BackendParams(name="dense-grid", grid_resolution=101),
            options={"note": "x"},
        )
        assert parse_config(dump_config(cfg)) == cfg

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "c.toml"
        path.write_text('experiment = "discrete"\nreplications = 7\n[model]\nd = 3\nT = 60\np_star = [0.2, 0.3, 0.5]\n')
        cfg = load_config(path)
        assert cfg.replications == 7 and cfg.model.p_star == (0.2, 0.3, 0.5)

    @pytest.mark.parametrize(
        "text",
        [
            'experiment = "nope"',
            'experiment = "discrete"\nbogus = 1',
            'experiment = "discrete"\n[model]\nd = 9',
            'experiment = "discrete"\n[model]\nd = 2\np_star = [0.5, 0.6]',
            'experiment = "logistic"\n[model]\nd = 1\nb = 1.0\ntheta_star = [2.0]',
            'experiment = "discrete"\ndelta = 1.5',
            "replications = 3",
            "experiment = ",
        ],
    )
    def test_rejects_invalid(self, text):
        with pytest.raises(ConfigurationError):
            parse_config(text)


class TestGenerate:
    def test_degenerate_multinomial(self):
        s = generate(Multinomial((1.0, 0.0, 0.0)), 50, seed=1)
        assert np.all(s.Y == 0)

    def test_logistic_null_labels_balanced(self):
        s = generate(Logistic((0.0, 0.0), 1.0), 4000, seed=42)
        assert stats.binomtest(int(s.Y.sum()), len(s.Y), 0.5).pvalue > 1e-3

    def test_covariates_in_ball(self):
        for model in (Logistic((1.0, 0.5), 0.7), GaussianLinModel((0.3,), 2.0), BoundedRegression((0.5, 0.5, 0.5), 1.5, 1.0)):
            s = generate(model, 2000, seed=42)
            assert np.linalg.norm(s.X, axis=1).max() <= model.r + 1e-12

    @pytest.mark.parametrize("misspecified", [False, True])
    def test_bounded_regression_range(self, misspecified):
        model = BoundedRegression((3.0, -2.0), 1.0, 0.8, 0.3, misspecified)
        s = generate(model, 5000, seed=42)
        assert np.abs(s.Y).max() <= 0.8

    def test_rejection_keeps_noise_unclipped(self):
        model = BoundedRegression((3.0,), 1.0, 1.0, 0.5)
        assert model.needs_rejection
        X = model.sample_x(np.random.default_rng(42), 1000)
        assert np.abs(model.target(X)).max() <= 0.5

    def test_deterministic(self):
        a = generate(GaussianLinModel((0.4, 0.1), 1.0), 30, seed=9)
        b = generate(GaussianLinModel((0.4, 0.1), 1.0), 30, seed=9)
        assert a.X.tobytes() == b.X.tobytes() and a.Y.tobytes() == b.Y.tobytes()

    def test_replay(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("x1,x2,y\n0.1,0.2,1.0\n0.3,0.4,0.0\n0.5,0.6,1.0\n")
        s = generate(Replay(str(path)), 2, seed=0)
        np.testing.assert_allclose(s.X, [[0.1, 0.2], [0.3, 0.4]])
        with pytest.raises(ConfigurationError):
            generate(Replay(str(path)), 5, seed=0)

    def test_invalid(self):
        with pytest.raises(ConfigurationError):
            generate(Multinomial((0.5, 0.5)), 0, seed=0)
        with pytest.raises(ConfigurationError):
            Multinomial((0.5, 0.6))


class TestRisk:
    def test_multinomial_decomposition(self):
        p_star = np.array([0.2, 0.5, 0.3])
        q = np.array([0.3, 0.3, 0.4])
        r = true_risk(q, Multinomial(tuple(p_star)))
        assert r.value == pytest.approx(entropy(p_star) + kl_discrete(p_star, q), rel=1e-14)
        assert r.value == pytest.approx(-(p_star @ np.log(q)), rel=1e-14)

    def test_linear_moments_match_monte_carlo(self):
        model = BoundedRegression((0.3, -0.2, 0.1), 1.0, 1.0, 0.4)
        pred = LinearPredictor((0.1, 0.1, 0.0))
        closed = true_risk(pred, model)
        mc = true_risk(pred, model, method="monte-carlo", n=10**6, seed=42)
        assert closed.method == "closed-form" and mc.method == "monte-carlo"
        assert abs(closed.value - mc.value) <= 3 * mc.se

    def test_constant_predictor_zero_risk(self):
        model = BoundedRegression((0.0,), 1.0, 1.0, 0.0)
        r = true_risk(lambda X: np.zeros(len(X)), model, n=1000)
        assert r.value == 0.0

    def test_logistic_excess_closed_form_matches_monte_carlo(self):
        model = Logistic((0.8,), 1.0)
        pred = lambda q: np.where(q[:, 1] > 0.5, 0.55, 0.45)
        closed = excess_risk(pred, model)
        mc = excess_risk(pred, model, method="monte-carlo", n=200_000, seed=42)
        assert abs(closed.value - mc.value) <= 3 * mc.se + 1e-12

    def test_excess_risk_of_truth_is_zero(self):
        theta = (0.6,)
        model = GaussianLinModel(theta, 1.0)
        truth = lambda q: np.exp(-(q[:, 1] - q[:, 0] * theta[0]) ** 2) / math.sqrt(math.pi)
        assert excess_risk(truth, model).value == pytest.approx(0.0, abs=1e-12)

    def test_monte_carlo_fallback_warns(self, caplog):
        with caplog.at_level("WARNING"):
            r = true_risk(lambda q: np.full(len(q), 0.5), Logistic((0.1, 0.1)), method="closed-form", n=1000)
        assert r.method == "monte-carlo"
        assert "falling back" in caplog.text

    def test_constrained_least_squares(self):
        rng = np.random.default_rng(42)
        X = rng.normal(size=(200, 3))
        y = X @ np.array([2.0, -1.0, 0.5]) + 0.1 * rng.standard_normal(200)
        theta = constrained_least_squares(X, y, 1.0)
        assert np.linalg.norm(theta) == pytest.approx(1.0, rel=1e-9)
        # optimality against random feasible points
        best = np.sum((X @ theta - y) ** 2)
        for _ in range(200):
            v = rng.normal(size=3)
            v *= rng.uniform() / np.linalg.norm(v)
            assert np.sum((X @ v - y) ** 2) >= best - 1e-9
        inside = constrained_least_squares(X, y, 10.0)
        np.testing.assert_allclose(inside, np.linalg.lstsq(X, y, rcond=None)[0])


class TestExperiment:
    def test_csv_schema_and_bytes_stable(self, tmp_path):
        cfg = small_discrete(replications=1)
        a = run_experiment(cfg, out=tmp_path / "a")
        b = run_experiment(cfg, out=tmp_path / "b")
        assert a.csv_text.splitlines()[0] == ",".join(CSV_COLUMNS)
        assert (tmp_path / "a" / "discrete.csv").read_bytes() == (tmp_path / "b" / "discrete.csv").read_bytes()
        summary = json.loads((tmp_path / "a" / "discrete.json").read_text())
        assert summary["bound"] == pytest.approx((44 + 28 * math.log(40) * math.log(20)) / 40)

    def test_workers_do_not_change_output(self):
        cfg = small_discrete(replications=4)
        assert run_experiment(cfg, workers=1).csv_text == run_experiment(cfg, workers=2).csv_text

    def test_seed_is_base_plus_index(self):
        cfg = small_discrete()
        assert [r["seed"] for r in run_experiment(cfg).rows] == [5, 6, 7]

    def test_replication_independent_of_order(self):
        cfg = small_discrete()
        assert replicate(cfg, 2) == run_experiment(cfg).rows[2]

    def test_summary_with_report(self):
        cfg = small_discrete(replications=20)
        res = run_experiment(cfg)
        s = res.summary
        for key in ("quantile", "bound", "violation_rate", "median_excess_risk", "m_flag_rate", "runtime_s"):
            assert key in s
        assert s["quantile_level"] == pytest.approx(0.9)
        assert res.report.violation_rate == s["violation_rate"]

    @pytest.mark.parametrize(
        "experiment,model",
        [
            ("logistic", ModelParams(d=1, T=30)),
            ("gaussian-glm", ModelParams(d=1, T=30)),
            ("linreg-vaw", ModelParams(d=2, T=50, b=2.0)),
            ("linreg-vaw", ModelParams(d=1, T=50, misspecified=True)),
            ("linreg-ewa", ModelParams(d=1, T=30)),
            ("aggregation", ModelParams(d=1, T=30, K=3)),
        ],
    )
    def test_experiments_run(self, experiment, model):
        cfg = ExperimentConfig(experiment, model, replications=2, risk_samples=2000, backend=BackendParams(grid_resolution=101))
        res = run_experiment(cfg)
        assert res.summary["completed"] == 2
        assert all(math.isfinite(r["excess_risk"]) for r in res.rows)

    def test_freedman(self):
        cfg = ExperimentConfig("freedman", ModelParams(T=50), options={"trials": 2000, "deltas": [0.1]})
        res = run_experiment(cfg)
        assert res.summary["all_passed"]
        assert {r["generator"] for r in res.rows} == {"rademacher", "bernoulli"}

    def test_format_float_round_trips(self):
        for v in (0.1, 1 / 3, 1e-300, 123456789.123456789):
            assert float(format_float(v)) == v
        assert format_float(3) == "3"


class TestCli:
    def test_run(self, tmp_path, capsys):
        cfg = tmp_path / "c.toml"
        cfg.write_text(dump_config(small_discrete(replications=2)))
        assert cli.main(["run", str(cfg), "--out", str(tmp_path / "out"), "--reps", "2"]) == cli.EXIT_OK
        assert (tmp_path / "out" / "discrete.csv").exists()
        assert json.loads(capsys.readouterr().out)["completed"] == 2

    def test_bad_config_exit_code(self, tmp_path):
        cfg = tmp_path / "c.toml"
        cfg.write_text('experiment = "unknown"\n')
        assert cli.main(["run", str(cfg)]) == cli.EXIT_CONFIG
        assert cli.main(["run", str(tmp_path / "missing.toml")]) == cli.EXIT_CONFIG

    def test_emit_bounds(self, tmp_path, capsys):
        params = tmp_path / "p.toml"
        params.write_text("T = 500\nd = 2\ndelta = 0.05\nl = 1.0\nb = 1.0\nr = 1.0\n")
        assert cli.main(["emit-bounds", str(params)]) == cli.EXIT_OK
        out = json.loads(capsys.readouterr().out)
        assert set(out) == {"discrete", "linreg_ewa", "linreg_vaw", "vaw_regret"}

    def test_suite_lemmas(self, capsys):
        assert cli.main(["suite", "lemmas"]) == cli.EXIT_OK
        lines = capsys.readouterr().out.strip().splitlines()
        assert len(lines) == 2 and all(l.startswith("[PASS]") for l in lines)
