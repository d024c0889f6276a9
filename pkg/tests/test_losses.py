import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from improper_o2b.losses import (
    DomainError,
    ExpConcaveLoss,
    check_exp_concavity,
    clip,
    clip_inequality_residuals,
    clipped_squared_loss,
    exp_concavity_violation,
    finite_difference_errors,
    gamma,
    log_loss,
    logistic_nll,
    make_shifted,
    negative_term_residual,
    observed_range,
    smoothed_log_loss,
    smoothed_log_loss_family,
    squared_loss,
)


def unit_square():
    """h(w) = w^2 on [0, 1] with alpha = 1/2, m = 1."""
    return ExpConcaveLoss("w2", alpha=0.5, m=1.0, value=lambda w, y: w**2, d1=lambda w, y: 2 * w, d2=lambda w, y: 2 + 0 * w, domain=(0.0, 1.0))


class TestGamma:
    @pytest.mark.parametrize("alpha,m,expected", [(1, 1, 4), (2, 3, 12), (1 / 8, 1, 32)])
    def test_values(self, alpha, m, expected):
        assert gamma(alpha, m) == pytest.approx(expected, rel=1e-15)

    @pytest.mark.parametrize("alpha,m", [(0, 1), (1, 0), (-1, 1)])
    def test_rejects_nonpositive(self, alpha, m):
        with pytest.raises(DomainError):
            gamma(alpha, m)

    def test_clipped_squared_loss_gamma_is_32_l2(self):
        for l in (0.5, 1.0, 3.0):
            assert clipped_squared_loss(l).gamma == pytest.approx(32 * l**2)


class TestNegativeTermResidual:
    def test_worked_example(self):
        assert negative_term_residual(unit_square(), 1.0, 0.0, 0.0) == pytest.approx(0.21875, abs=1e-15)

    def test_equal_points_give_zero(self):
        h = unit_square()
        np.testing.assert_allclose(negative_term_residual(h, np.array([0.3, 0.7]), np.array([0.3, 0.7]), 0.0), 0.0, atol=1e-15)

    def test_outside_domain(self):
        with pytest.raises(DomainError):
            negative_term_residual(unit_square(), 1.5, 0.0, 0.0)

    def test_random_draws_nonnegative(self):
        rng = np.random.default_rng(42)
        h = squared_loss(-1, 1)
        x, y, out = rng.uniform(-1, 1, size=(3, 10**5))
        assert negative_term_residual(h, x, y, out).min() >= -1e-10
        h = smoothed_log_loss_family(0.05, 1.0, 0.5)
        x, y = rng.uniform(0, 1, size=(2, 10**5))
        assert negative_term_residual(h, x, y, 0.5).min() >= -1e-10

    def test_rearranged_form(self):
        rng = np.random.default_rng(42)
        h = squared_loss(-2, 1)
        x, y, out = rng.uniform(-2, 1, size=(3, 10**4))
        hx, hy, hm = h(x, out), h(y, out), h(0.5 * x + 0.5 * y, out)
        assert np.all(hx - hy <= 2 * hx - 2 * hm - (hx - hy) ** 2 / (2 * h.gamma) + 1e-10)


class TestShifted:
    def test_center_zero_halves_argument(self):
        base = squared_loss(-1, 1)
        s = make_shifted(base, 0.0, 0.2)
        w = np.linspace(-1, 1, 11)
        np.testing.assert_allclose(s.value(w), base(w / 2, 0.2), rtol=1e-15)

    def test_value_at_center(self):
        base = squared_loss(-1, 1)
        s = make_shifted(base, 0.4, -0.3)
        assert s.value(0.4) == pytest.approx(base(0.4, -0.3))

    def test_chain_rule(self):
        base = squared_loss(-1, 1)
        s = make_shifted(base, 0.4, -0.3)
        w = np.linspace(-1, 1, 7)
        np.testing.assert_allclose(s.d1(w), 0.5 * base.d1(0.5 * w + 0.2, -0.3))
        np.testing.assert_allclose(s.d2(w), 0.25 * base.d2(0.5 * w + 0.2, -0.3))

    def test_keeps_alpha_and_exp_concavity(self):
        for base, center, outcome in [
            (squared_loss(-1, 1), 0.3, -1.0),
            (smoothed_log_loss_family(0.1, 1.0, 0.5), 0.6, 0.5),
            (logistic_nll(2.0), -1.0, 1.0),
        ]:
            s = make_shifted(base, center, outcome)
            assert s.alpha == base.alpha
            assert check_exp_concavity(s.as_loss(), [0.0])

    def test_center_outside_domain(self):
        with pytest.raises(DomainError):
            make_shifted(squared_loss(-1, 1), 2.0, 0.0)


class TestClip:
    @pytest.mark.parametrize("z,expected", [(0.5, 0.5), (2, 1), (-3, -1)])
    def test_values(self, z, expected):
        assert clip(z, 1) == expected

    def test_residual_examples(self):
        assert clip_inequality_residuals(0.3, 0.1, 1) == (0.0, 0.0)
        first, second = clip_inequality_residuals(2.0, 1.0, 1.0)
        assert first == pytest.approx(-1.0)
        assert second == pytest.approx(-0.25)

    def test_outcome_out_of_range(self):
        with pytest.raises(DomainError):
            clip_inequality_residuals(0.0, 1.5, 1.0)

    @settings(max_examples=300, deadline=None)
    @given(
        z=st.floats(-100, 100),
        u=st.floats(-1, 1),
        l=st.floats(0.01, 10),
    )
    def test_residuals_nonpositive(self, z, u, l):
        first, second = clip_inequality_residuals(z, u * l, l)
        assert first <= 1e-12 * max(1.0, z * z)
        assert second <= 1e-12 * max(1.0, z * z)


class TestSmoothing:
    def test_mu_zero(self):
        assert smoothed_log_loss(0.8, 0.3, 0.0) == pytest.approx(-math.log(0.8))

    def test_zero_density(self):
        assert smoothed_log_loss(0.0, 0.5, 0.5) == pytest.approx(math.log(4))

    def test_gap_example(self):
        gap = smoothed_log_loss(1.0, 0.5, 0.1) - smoothed_log_loss(1.0, 0.5, 0.0)
        assert gap == pytest.approx(math.log(1 / 0.95), rel=1e-12)
        assert gap <= 0.2

    def test_rejects_bad_inputs(self):
        with pytest.raises(DomainError):
            smoothed_log_loss(0.5, 0.5, 0.6)
        with pytest.raises(DomainError):
            smoothed_log_loss(0.0, 0.5, 0.0)

    def test_smoothing_gap_bounded_by_two_mu(self):
        rng = np.random.default_rng(42)
        p = rng.uniform(1e-8, 1.0, 10**4)
        p0 = rng.uniform(1e-3, 5.0, 10**4)
        for mu in np.linspace(0, 0.5, 21):
            assert np.max(smoothed_log_loss(p, p0, mu) + np.log(p)) <= 2 * mu + 1e-12


class TestFamilies:
    @pytest.mark.parametrize(
        "loss,outcomes",
        [
            (squared_loss(-1, 1), [-1.0, 0.0, 1.0]),
            (clipped_squared_loss(2.0), [-2.0, 2.0]),
            (log_loss(0.05), [0.0]),
            (smoothed_log_loss_family(0.1, 1.0, 0.5), [0.5]),
            (smoothed_log_loss_family(0.01, 0.6, 0.1, 2.0), [0.1, 2.0]),
            (logistic_nll(3.0), [0.0, 1.0]),
        ],
    )
    def test_exp_concave_on_grid(self, loss, outcomes):
        assert exp_concavity_violation(loss, outcomes) <= 1e-8

    def test_too_large_alpha_is_caught(self):
        base = squared_loss(-1, 1)
        bad = ExpConcaveLoss("bad", alpha=10 * base.alpha, m=base.m, value=base.value, d1=base.d1, d2=base.d2, domain=base.domain)
        assert not check_exp_concavity(bad, [-1.0, 1.0])

    @pytest.mark.parametrize(
        "loss,outcomes",
        [
            (squared_loss(-1, 1), [-1.0, 0.3, 1.0]),
            (smoothed_log_loss_family(0.1, 1.0, 0.5), [0.5]),
            (logistic_nll(2.0), [0.0, 1.0]),
            (log_loss(0.1), [0.0]),
        ],
    )
    def test_finite_differences(self, loss, outcomes):
        lo, hi = loss.domain
        w = np.linspace(lo, hi, 203)[1:-1]
        for y in outcomes:
            e1, e2 = finite_difference_errors(loss, w, y, step=1e-5)
            assert e1.max() <= 1e-5 and e2.max() <= 1e-5

    @pytest.mark.parametrize(
        "loss,outcomes",
        [
            (squared_loss(-1, 1), [-1.0, 1.0]),
            (smoothed_log_loss_family(0.1, 1.0, 0.5), [0.5]),
            (logistic_nll(2.0), [0.0, 1.0]),
        ],
    )
    def test_declared_m_covers_range(self, loss, outcomes):
        assert observed_range(loss, outcomes) <= loss.m + 1e-12

    def test_raw_log_loss_refuses_zero(self):
        with pytest.raises(DomainError):
            log_loss(0.1)(np.array([0.0, 0.5]), 0.0)

    def test_logistic_value_at_zero(self):
        assert logistic_nll(1.0)(0.0, 1.0) == pytest.approx(math.log(2))
