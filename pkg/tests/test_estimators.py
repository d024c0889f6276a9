import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from improper_o2b.analysis import HypothesisWarning, vaw_regret_bound
from improper_o2b.estimators import (
    DiscreteDistConfig,
    LinRegConfig,
    VawLearner,
    aggregate_finite,
    aggregation_learner,
    conditional_density_estimator,
    discrete_dist_estimator,
    gaussian_linmodel_spec,
    init_vaw,
    laplace_estimator,
    linreg_ewa,
    linreg_vaw,
    logistic_spec,
    vaw_average_predict,
    vaw_update,
)
from improper_o2b.losses import DomainError, clip, smoothed_log_loss, squared_loss
from improper_o2b.o2b import run, shifted_regret
from improper_o2b.posterior import ConfigurationError, IntegratorConfig


def const(c):
    return lambda X: np.full(len(np.atleast_2d(X)), float(c))


def ball_stream(rng, T, d, theta, l=1.0, noise=0.3):
    X = rng.normal(size=(T, d))
    X /= np.maximum(1.0, np.linalg.norm(X, axis=1))[:, None]
    Y = np.clip(X @ theta + noise * rng.standard_normal(T), -l, l)
    return list(zip(X, Y))


# -- aggregation ------------------------------------------------------------------------


class TestAggregation:
    def test_single_function(self):
        rng = np.random.default_rng(42)
        f = lambda X: np.tanh(np.atleast_2d(X)[:, 0])
        avg = aggregate_finite([f], ball_stream(rng, 20, 1, np.array([0.5])), squared_loss(-1, 1))
        X = rng.uniform(-1, 1, size=(9, 1))
        np.testing.assert_allclose(avg.predict(X), f(X), atol=1e-15)

    def test_weight_on_better_constant_increases(self):
        stream = [(np.array([0.0]), 0.0)] * 12
        traj = run(stream, aggregation_learner([const(0.0), const(1.0)], squared_loss(-1, 1)))
        w0 = np.array([r.snapshot.weights[0] for r in traj.rounds])
        assert np.all(np.diff(w0) > 0)

    def test_regret_three_functions(self):
        rng = np.random.default_rng(42)
        loss = squared_loss(-1, 1)
        dictionary = [const(-0.2), lambda X: np.clip(np.atleast_2d(X)[:, 0], -1, 1), const(0.4)]
        avg = aggregate_finite(dictionary, ball_stream(rng, 50, 1, np.array([0.8])), loss)
        for f in dictionary:
            assert shifted_regret(avg.trajectory, f) <= math.log(3) / loss.alpha + 1e-9

    def test_empty_dictionary(self):
        with pytest.raises(ConfigurationError):
            aggregate_finite([], [(0.0, 0.0)], squared_loss(-1, 1))


# -- GLM ----------------------------------------------------------------------------------


def _g(spec, z, y):
    return spec.neg_log_density(z, y)


class TestLogisticSpec:
    def test_g1_at_zero(self):
        spec = logistic_spec(1.0, 1.0, 1, 100)
        assert _g(spec, 0.0, 1) == pytest.approx(math.log(2))

    def test_curvature_bounded_by_kappa_and_convex(self):
        spec = logistic_spec(1.0, 1.0, 1, 100)
        z = np.linspace(-10, 10, 2001)
        h = 1e-2
        for y in (0, 1):
            g2 = (_g(spec, z + h, y) - 2 * _g(spec, z, y) + _g(spec, z - h, y)) / h**2
            assert g2.max() <= spec.kappa + 1e-6
            assert g2.min() >= -1e-6

    def test_defaults(self):
        spec = logistic_spec(1.0, 2.0, 2, 50)
        assert spec.kappa == 0.25 and spec.mu == pytest.approx(2 / 50)
        np.testing.assert_allclose(spec.p0(np.array([0, 1]), np.zeros((2, 2))), 0.5)
        assert spec.sigma2 == pytest.approx(2.0)

    def test_declared_m_covers_any_mixture(self):
        # any predicted probability in [0, 1] against any class probability
        spec = logistic_spec(1.0, 1.0, 1, 300)
        p = np.linspace(0, 1, 1001)
        loss = smoothed_log_loss(p, 0.5, spec.mu)
        assert loss.max() - loss.min() <= spec.m + 1e-12


class TestGaussianLinmodelSpec:
    def test_peak(self):
        spec = gaussian_linmodel_spec(1.0, 1.0, 1, 100)
        assert spec.density(0.7, 0.7) == pytest.approx(1 / math.sqrt(math.pi))

    def test_p0_symmetric(self):
        spec = gaussian_linmodel_spec(1.0, 1.5, 1, 100)
        y = np.linspace(-4, 4, 81)
        np.testing.assert_allclose(spec.p0(y, None), spec.p0(-y, None), rtol=1e-15)

    def test_mu_on_search_grid(self):
        spec = gaussian_linmodel_spec(1.0, 1.0, 2, 200)
        k = math.log2(spec.mu * 200 / 2)
        assert spec.mu == 0.5 or abs(k - round(k)) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(
        z=st.floats(-1, 1),
        zs=st.lists(st.floats(-1, 1), min_size=1, max_size=5),
        y=st.floats(-6, 6),
        mu=st.floats(0.001, 0.5),
    )
    def test_log_two_over_mu_cap_for_small_radius(self, z, zs, y, mu):
        # with (rb)^2 <= log 2 every in-class density is at most 2 p0
        rb = math.sqrt(math.log(2))
        spec = gaussian_linmodel_spec(1.0, rb, 1, 100)
        mix = np.mean(spec.density(rb * np.array(zs), y))
        single = spec.density(rb * z, y)
        p0 = spec.p0(np.asarray(y), None)
        gap = abs(smoothed_log_loss(mix, p0, mu) - smoothed_log_loss(single, p0, mu))
        assert gap <= math.log(2 / mu) + 1e-12

    def test_log_two_over_mu_cap_fails_for_unit_radius(self):
        # y = 0, theta^T x = 0, posterior mass far away: ratio e^{(rb)^2} > 2
        spec = gaussian_linmodel_spec(1.0, 1.0, 1, 100)
        mu = 0.05
        p0 = spec.p0(np.asarray(0.0), None)
        gap = smoothed_log_loss(0.0, p0, mu) - smoothed_log_loss(spec.density(0.0, 0.0), p0, mu)
        assert gap == pytest.approx(math.log(1 + (1 - mu) * math.e / mu))
        assert gap > math.log(2 / mu)


def _logistic_stream(rng, T, theta):
    X = rng.uniform(-1, 1, size=(T, 1))
    Y = (rng.uniform(size=T) < 1 / (1 + np.exp(-X @ theta))).astype(float)
    return list(zip(X, Y))


class TestConditionalDensity:
    def test_T1_is_smoothed_prior_predictive(self):
        spec = logistic_spec(1.0, 1.0, 1, 4)
        est = conditional_density_estimator(spec, [(np.array([0.5]), 1.0)])
        x = 0.7
        # E_{theta ~ N(0, 1)} s(theta x) by adaptive quadrature
        prior_pred, _ = integrate.quad(lambda t: stats.norm.pdf(t) / (1 + math.exp(-t * x)), -12, 12, epsabs=1e-13)
        expected = (1 - spec.mu) * prior_pred + spec.mu * 0.5
        assert est.predict(np.array([[x, 1.0]]))[0] == pytest.approx(expected, abs=1e-9)

    def test_constant_density_passes_through(self):
        base = logistic_spec(1.0, 1.0, 1, 50)
        flat = type(base)(
            name="flat", density=lambda z, y: np.full(np.broadcast(z, y).shape, 0.3), kappa=0.0,
            r=1.0, b=1.0, d=1, p0=base.p0, mu=1e-12, p_max=1.0, m=base.m,
        )
        rng = np.random.default_rng(42)
        est = conditional_density_estimator(flat, _logistic_stream(rng, 20, np.array([1.0])))
        q = np.column_stack([rng.uniform(-1, 1, 5), np.ones(5)])
        np.testing.assert_allclose(est.predict(q), 0.3, atol=1e-9)

    def test_normalized_over_labels(self):
        rng = np.random.default_rng(42)
        spec = logistic_spec(1.0, 1.0, 1, 40)
        est = conditional_density_estimator(spec, _logistic_stream(rng, 40, np.array([0.7])))
        x = rng.uniform(-1, 1, 10)
        total = est.predict(np.column_stack([x, np.ones(10)])) + est.predict(np.column_stack([x, np.zeros(10)]))
        np.testing.assert_allclose(total, 1.0, atol=1e-12)

    def test_grid_and_metropolis_agree(self):
        rng = np.random.default_rng(42)
        T = 30
        spec = logistic_spec(1.0, 1.0, 1, T)
        stream = _logistic_stream(rng, T, np.array([0.8]))
        grid = conditional_density_estimator(spec, stream, backend="dense-grid")
        mh = conditional_density_estimator(spec, stream, backend="metropolis", config=IntegratorConfig(n_chains=2048, mcmc_steps=300, burn_in=100), seed=7)
        q = np.column_stack([np.linspace(-1, 1, 10).repeat(2), np.tile([0.0, 1.0], 10)])
        assert np.max(np.abs(grid.predict(q) - mh.predict(q))) <= 0.01

    def test_norm_violations_flagged(self):
        spec = logistic_spec(1.0, 1.0, 1, 3)
        est = conditional_density_estimator(spec, [(np.array([0.5]), 1.0), (np.array([2.0]), 0.0), (np.array([-3.0]), 1.0)])
        assert est.trajectory.flags["norm_violations"] == 2

    def test_declared_m_not_exceeded_on_logistic_data(self):
        rng = np.random.default_rng(42)
        spec = logistic_spec(1.0, 1.0, 1, 100)
        est = conditional_density_estimator(spec, _logistic_stream(rng, 100, np.array([1.0])))
        assert not est.trajectory.flags["m_exceeded"]
        assert est.trajectory.m_observed <= spec.m


# -- discrete ----------------------------------------------------------------------------


class TestDiscrete:
    def test_floor_and_normalization(self):
        rng = np.random.default_rng(42)
        for d in (2, 3, 4):
            T = 10 * d
            p = discrete_dist_estimator(rng.integers(0, d, T), DiscreteDistConfig(d, T, resolution=60))
            mu = d / T
            assert p.min() >= mu / d - 1e-15
            assert p.sum() == pytest.approx(1.0, abs=1e-12)

    def test_two_samples_prior(self):
        with pytest.warns(HypothesisWarning):
            cfg = DiscreteDistConfig(2, 2)
        fit = discrete_dist_estimator(np.array([0, 1]), cfg, return_fit=True)
        np.testing.assert_allclose(fit.prior_params, [1.0, 0.5])
        np.testing.assert_allclose(fit.trajectory.rounds[0].snapshot.prior.mean, [2 / 3, 1 / 3], rtol=1e-15)
        first = fit.trajectory.rounds[0].snapshot
        np.testing.assert_allclose(first.predict(np.array([[0.0], [1.0]])), [2 / 3, 1 / 3], atol=1e-4)

    def test_resolution_self_convergence(self):
        rng = np.random.default_rng(42)
        samples = rng.choice(2, size=200, p=[0.3, 0.7])
        coarse = discrete_dist_estimator(samples, DiscreteDistConfig(2, 200, resolution=1000))
        fine = discrete_dist_estimator(samples, DiscreteDistConfig(2, 200, resolution=10000))
        assert np.abs(coarse - fine).sum() <= 1e-3

    def test_odd_T_drops_last(self):
        rng = np.random.default_rng(42)
        s = rng.integers(0, 3, 41)
        a = discrete_dist_estimator(s, DiscreteDistConfig(3, 41, mu=0.05, resolution=40))
        b = discrete_dist_estimator(s[:40], DiscreteDistConfig(3, 40, mu=0.05, resolution=40))
        np.testing.assert_allclose(a, b, rtol=1e-15)

    def test_degenerate_source(self):
        p = discrete_dist_estimator(np.zeros(40, dtype=int), DiscreteDistConfig(2, 40, resolution=400))
        assert p[0] > 0.9

    def test_unsupported_alphabet(self):
        with pytest.raises(ConfigurationError):
            DiscreteDistConfig(5, 100)

    def test_bad_symbols(self):
        with pytest.raises(DomainError):
            discrete_dist_estimator(np.array([0, 2] * 10), DiscreteDistConfig(2, 20))

    def test_sample_count_must_match(self):
        with pytest.raises(ConfigurationError):
            discrete_dist_estimator(np.zeros(10, dtype=int), DiscreteDistConfig(2, 20))

    def test_no_warning_when_T_large(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            DiscreteDistConfig(3, 13)

    def test_large_counts_stay_finite(self):
        # prior parameters in the hundreds underflow hi^a - lo^a outside log space
        samples = np.random.default_rng(42).permutation([0] * 1200 + [1] * 300 + [2] * 100)
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            p = discrete_dist_estimator(samples, DiscreteDistConfig(3, len(samples), resolution=120))
        assert np.all(np.isfinite(p)) and p.sum() == pytest.approx(1.0, abs=1e-12)
        np.testing.assert_allclose(p, [0.75, 0.1875, 0.0625], atol=0.02)

    def test_laplace(self):
        np.testing.assert_allclose(laplace_estimator(np.array([0, 0, 1]), 3), [3 / 6, 2 / 6, 1 / 6])


# -- linear regression -------------------------------------------------------------------


def naive_vaw(stream, l, sigma2):
    """Per-round direct solves of (sum_{s<=t} X X^T/4 + I/sigma2) theta = b_t."""
    d = len(stream[0][0])
    S = np.eye(d) / sigma2
    vec = np.zeros(d)
    thetas, targets = [], []
    for x, y in stream:
        theta = np.linalg.solve(S + np.outer(x, x) / 4, vec)
        pred = clip(theta @ x, l)
        ytilde = y - 0.5 * pred
        S = S + np.outer(x, x) / 4
        vec = vec + 0.5 * ytilde * x
        thetas.append(theta)
        targets.append(ytilde)
    return thetas, targets


class TestVaw:
    def test_first_round(self):
        state = init_vaw(2, 1.0, 1.0)
        vaw_update(state, np.array([0.3, -0.4]), 0.7)
        assert state.targets[0] == pytest.approx(0.7)
        assert state.snapshots[0].predict(np.array([[0.3, -0.4]]))[0] == 0.0

    def test_inverse_matches_direct(self):
        rng = np.random.default_rng(42)
        state = init_vaw(2, 0.5, 1.0)
        for x, y in ball_stream(rng, 10, 2, np.array([0.5, -0.5])):
            vaw_update(state, x, y)
            direct = np.linalg.inv(state.gram)
            assert np.linalg.norm(state.inv_gram - direct) / np.linalg.norm(direct) <= 1e-8

    def test_targets_bounded(self):
        rng = np.random.default_rng(42)
        l = 0.7
        state = init_vaw(3, 4.0, l)
        for x, y in ball_stream(rng, 300, 3, np.array([2.0, -1.0, 0.5]), l=l):
            vaw_update(state, x, y)
        assert np.max(np.abs(state.targets)) <= 1.5 * l + 1e-12

    def test_T1_average_is_zero(self):
        avg = linreg_vaw([(np.array([0.5, 0.5]), 0.9)], LinRegConfig(2, 1.0, 1.0, 1.0))
        np.testing.assert_array_equal(avg.predict(np.array([[0.2, 0.1], [1.0, 0.0]])), 0.0)

    def test_average_matches_naive_solves(self):
        rng = np.random.default_rng(42)
        cfg = LinRegConfig(2, 1.0, 1.0, 2.0)
        stream = ball_stream(rng, 20, 2, np.array([1.0, 0.5]))
        avg = linreg_vaw(stream, cfg)
        queries = rng.uniform(-1, 1, size=(15, 2))
        _, targets = naive_vaw(stream, 1.0, cfg.prior_variance)
        expected = []
        for x in queries:
            # theta_t(x) uses the query's own xx^T/4 term
            S = np.eye(2) / cfg.prior_variance
            vec = np.zeros(2)
            preds = []
            for (xt, _), ytilde in zip(stream, targets):
                theta = np.linalg.solve(S + np.outer(x, x) / 4, vec)
                preds.append(clip(theta @ x, 1.0))
                S = S + np.outer(xt, xt) / 4
                vec = vec + 0.5 * ytilde * xt
            expected.append(np.mean(preds))
        np.testing.assert_allclose(avg.predict(queries), expected, atol=1e-8)

    def test_targets_match_naive(self):
        rng = np.random.default_rng(42)
        stream = ball_stream(rng, 25, 3, np.array([0.4, 0.1, -0.9]))
        state = init_vaw(3, 0.8, 1.0)
        for x, y in stream:
            vaw_update(state, x, y)
        _, targets = naive_vaw(stream, 1.0, 0.8)
        np.testing.assert_allclose(state.targets, targets, atol=1e-12)

    def test_output_range(self):
        rng = np.random.default_rng(42)
        state = init_vaw(2, 10.0, 0.5)
        for x, y in ball_stream(rng, 50, 2, np.array([3.0, 3.0]), l=0.5, noise=0.0):
            vaw_update(state, x, y)
        out = vaw_average_predict(state.snapshots, rng.uniform(-5, 5, size=(100, 2)), 0.5)
        assert np.all(np.abs(out) <= 0.5)

    def test_regret_within_cap(self):
        rng = np.random.default_rng(42)
        d, T, l, r, b = 2, 200, 1.0, 1.0, 1.0
        theta = np.array([0.6, -0.6])
        stream = ball_stream(rng, T, d, theta)
        traj = run(stream, VawLearner(LinRegConfig(d, r, l, b)))
        assert shifted_regret(traj, lambda q: q @ theta) <= vaw_regret_bound(l, d, T, b, r) + 1e-6

    def test_rejects_large_outcome(self):
        with pytest.raises(DomainError):
            vaw_update(init_vaw(1, 1.0, 1.0), np.array([0.5]), 1.5)

    def test_prior_variance_defaults(self):
        assert LinRegConfig(2, 1.0, 2.0, 3.0).prior_variance == pytest.approx(9 / 8)
        assert LinRegConfig(2, 1.0, 2.0, 3.0, mode="ewa-clipped").prior_variance == pytest.approx(4.5)

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            LinRegConfig(2, 1.0, 1.0, 1.0, mode="ridge")


class TestLinregEwa:
    def test_output_range(self):
        rng = np.random.default_rng(42)
        cfg = LinRegConfig(1, 1.0, 0.5, 2.0, mode="ewa-clipped")
        avg = linreg_ewa(ball_stream(rng, 40, 1, np.array([1.5]), l=0.5), cfg)
        out = avg.predict(np.linspace(-3, 3, 31)[:, None])
        assert np.all(np.abs(out) <= 0.5)

    def test_requires_ewa_mode(self):
        with pytest.raises(ConfigurationError):
            linreg_ewa([(np.array([0.0]), 0.0)], LinRegConfig(1, 1.0, 1.0, 1.0))

    def test_dimension_beyond_backend(self):
        cfg = LinRegConfig(9, 1.0, 1.0, 1.0, mode="ewa-clipped")
        with pytest.raises(ConfigurationError):
            linreg_ewa([(np.zeros(9), 0.0)], cfg)

    def test_grid_and_metropolis_agree(self):
        rng = np.random.default_rng(42)
        cfg = LinRegConfig(1, 1.0, 1.0, 1.0, mode="ewa-clipped")
        stream = ball_stream(rng, 30, 1, np.array([0.6]))
        grid = linreg_ewa(stream, cfg, backend="dense-grid")
        mh = linreg_ewa(stream, cfg, backend="metropolis", integrator=IntegratorConfig(n_chains=2048, mcmc_steps=300, burn_in=100), seed=3)
        x = np.linspace(-1, 1, 20)[:, None]
        assert np.max(np.abs(grid.predict(x) - mh.predict(x))) <= 0.01

    def test_pure_noise_shrinks_with_T(self):
        cfg = LinRegConfig(1, 1.0, 1.0, 1.0, mode="ewa-clipped")
        x = np.array([[1.0]])
        medians = []
        # past the prior-dominated phase (alpha T of order 10) the fit decays like 1/sqrt(T)
        for T in (200, 2000):
            vals = []
            for rep in range(50):
                rng = np.random.default_rng([42, rep])
                X = rng.uniform(-1, 1, size=(T, 1))
                Y = rng.choice([-1.0, 1.0], T)
                vals.append(abs(linreg_ewa(list(zip(X, Y)), cfg, integrator=IntegratorConfig(grid_resolution=201)).predict(x)[0]))
            medians.append(np.median(vals))
        assert medians[1] < medians[0]
