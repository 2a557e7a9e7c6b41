# tests/test_mminf.py
import math

import mpmath
import numpy as np
import pytest
from scipy import stats

from cycle_queue.mc_harness import summarize, z_test
from cycle_queue.mminf import (
    LtConvention,
    QueueParams,
    RateConvention,
    arrivals_variance,
    duration_arrivals_covariance,
    duration_lt,
    duration_second_moment,
    duration_third_moment,
    duration_variance,
    first_passage_mean_sum,
    i_integral,
    i_integral_kummer,
    joint_lt,
    kummer_ratio,
    leading_root,
    mean_area,
    mean_arrivals,
    mean_duration,
    simulate_queue_excursion,
    simulate_queue_excursions,
    tail_decay_rate,
    transient_lt,
    transient_pmf,
)
from cycle_queue.specials import kummer_m
from cycle_queue.utils import DomainError

UNIT = QueueParams(1.0, 1.0)


@pytest.fixture(scope="module")
def busy_sample():
    rng = np.random.default_rng(97)
    return simulate_queue_excursions(UNIT, 0, 100_000, rng)


class TestTransientLaw:
    def test_poisson_with_growing_mean(self):
        params = QueueParams(3.0, 2.0)
        mean = 1.5 * (1 - math.exp(-2.0 * 0.4))
        assert transient_pmf(params, 0.4, 2) == pytest.approx(stats.poisson.pmf(2, mean))
        assert transient_pmf(params, 0.0, 0) == 1.0
        assert transient_pmf(params, 0.0, 3) == 0.0

    def test_displayed_convention(self):
        params = QueueParams(3.0, 2.0)
        mean = 1.5 * (1 - math.exp(-0.4 / 2.0))
        value = transient_pmf(params, 0.4, 1, RateConvention.DISPLAYED)
        assert value == pytest.approx(stats.poisson.pmf(1, mean))

    @pytest.mark.parametrize("c", [0, 1, 3])
    def test_laplace_transform_matches_quadrature(self, c):
        params, z = QueueParams(3.0, 2.0), 0.7
        expected = mpmath.quad(lambda t: transient_pmf(params, float(t), c) * mpmath.exp(-z * t), [0, 5, mpmath.inf])
        assert transient_lt(params, c, z) == pytest.approx(float(expected), rel=1e-9)


class TestRenewalMeans:
    def test_busy_period_means(self):
        assert mean_duration(UNIT, 0) == pytest.approx(math.e - 1)
        assert mean_arrivals(UNIT, 0) == pytest.approx(math.e - 1)

    def test_area_above_level(self):
        params, c = QueueParams(2.0, 0.5), 2
        rho = params.rho
        pi = stats.poisson(rho).pmf
        j = np.arange(c + 1, 200)
        expected = np.sum(pi(j) * (j - c)) / (params.theta * pi(c))
        assert mean_area(params, c) == pytest.approx(expected, rel=1e-10)

    def test_renewal_identity(self):
        params = QueueParams(2.5, 1.5)
        for c in range(5):
            assert mean_arrivals(params, c) == pytest.approx(params.theta * mean_duration(params, c))

    def test_first_passage_sum(self):
        params = QueueParams(1.0, 1.0)
        assert first_passage_mean_sum(params, 0) == pytest.approx(mean_duration(params, 0))
        small, large = first_passage_mean_sum(params, 100), first_passage_mean_sum(params, 10_000)
        ratio_small, ratio_large = small / math.log(100), large / math.log(10_000)
        assert 1.0 < ratio_large < ratio_small
        assert ratio_large == pytest.approx(1.2, abs=0.05)
        # the gap to log c settles
        assert abs((large - math.log(10_000)) - (small - math.log(100))) < 0.05


class TestKummerTransforms:
    @pytest.mark.parametrize("c, alpha, beta", [(0, 0.5, 1.0), (2, 1.7, 3.0), (1, 3.0, 0.2)])
    def test_integral_routes(self, c, alpha, beta):
        expected = float(mpmath.quad(lambda u: u ** c * (1 - u) ** (alpha - 1) * mpmath.exp(-beta * u), [0, 1]))
        assert i_integral_kummer(c, alpha, beta) == pytest.approx(expected, rel=1e-10)
        assert i_integral(c, alpha, beta) == pytest.approx(expected, rel=1e-8)

    def test_ratio_matches_integrals(self):
        c, alpha, beta = 1, 0.8, 2.0
        expected = i_integral_kummer(c + 1, alpha, beta) / i_integral_kummer(c, alpha, beta)
        assert kummer_ratio(c, alpha, beta) == pytest.approx(expected, rel=1e-12)
        assert kummer_ratio(c, 0.0, beta) == 1.0

    def test_domain(self):
        with pytest.raises(DomainError):
            i_integral_kummer(0, 0.0, 1.0)
        with pytest.raises(DomainError):
            kummer_ratio(0, -0.1, 1.0)

    @pytest.mark.parametrize("c", [0, 2])
    def test_transform_slope_is_mean_duration(self, c):
        params = QueueParams(1.5, 2.0)
        h = 1e-6
        slope = (1.0 - duration_lt(params, c, h)) / h
        assert slope == pytest.approx(mean_duration(params, c), rel=1e-4)

    def test_conventions_differ_off_unit_rate(self):
        params = QueueParams(1.0, 2.0)
        assert duration_lt(params, 0, 0.5) != pytest.approx(duration_lt(params, 0, 0.5, LtConvention.MU_Z))
        assert duration_lt(UNIT, 0, 0.5) == pytest.approx(duration_lt(UNIT, 0, 0.5, LtConvention.MU_Z))

    def test_joint_transform_reduces_to_duration(self):
        params = QueueParams(1.3, 0.9)
        assert joint_lt(params, 1, 0.0, 0.0, 0.0) == pytest.approx(1.0)
        assert joint_lt(params, 1, 0.4, 0.0, 0.0) == pytest.approx(duration_lt(params, 1, 0.4), rel=1e-12)

    def test_joint_transform_rejects_negative(self):
        with pytest.raises(DomainError):
            joint_lt(UNIT, 0, -0.1, 0.0, 0.0)


class TestBusyMoments:
    def test_variance(self):
        assert duration_variance(UNIT) == pytest.approx(4.2123, abs=1e-4)

    def test_second_moment_closed_form(self):
        # E[D^2] = 2 e^rho Ein(rho) / (theta mu)
        params = QueueParams(2.0, 1.5)
        rho = params.rho
        ein = float(mpmath.quad(lambda s: mpmath.expm1(s) / s, [0, rho]))
        assert duration_second_moment(params) == pytest.approx(2 * math.exp(rho) * ein / 3.0, rel=1e-12)

    def test_third_moment_small_load(self):
        # mu^3 E[D^3] / 6 = 1 + 17 rho / 8 + O(rho^2)
        rho = 1e-4
        params = QueueParams(rho, 1.0)
        assert duration_third_moment(params) / 6 == pytest.approx(1 + 17 * rho / 8, abs=1e-6)

    def test_arrival_variance(self):
        assert arrivals_variance(UNIT) == pytest.approx(7.930, abs=1e-3)


class TestLeadingRoot:
    def test_unit_load(self):
        root = leading_root(UNIT, 0)
        assert root == pytest.approx(0.450, abs=1e-3)
        assert abs(kummer_m(-root, 1 - root, 1.0)) < 1e-9

    def test_rate_scales_with_mu(self):
        params = QueueParams(2.0, 2.0)
        assert tail_decay_rate(params, 0) == pytest.approx(2.0 * leading_root(UNIT, 0))

    def test_root_below_pole(self):
        for c in range(3):
            assert 0 < leading_root(QueueParams(2.0, 1.0), c) < c + 1


class TestSimulation:
    def test_single_excursion(self, rng):
        exc = simulate_queue_excursion(QueueParams(2.0, 1.0), 1, rng)
        assert exc.steps == 2 * exc.arrivals + 1
        assert exc.area >= exc.duration

    def test_means(self, busy_sample):
        assert z_test(summarize(busy_sample.duration), mean_duration(UNIT, 0)).passed
        assert z_test(summarize(busy_sample.area), mean_area(UNIT, 0)).passed
        assert z_test(summarize(busy_sample.arrivals), mean_arrivals(UNIT, 0)).passed

    def test_wald_identities(self, busy_sample):
        gap = busy_sample.arrivals - UNIT.theta * busy_sample.duration
        assert z_test(summarize(gap), 0.0).passed
        assert z_test(summarize(gap ** 2), mean_arrivals(UNIT, 0)).passed

    def test_moments(self, busy_sample):
        d = busy_sample.duration
        mean = mean_duration(UNIT, 0)
        assert z_test(summarize((d - mean) ** 2), duration_variance(UNIT)).passed
        assert z_test(summarize(d ** 3), duration_third_moment(UNIT)).passed
        cov = (d - mean) * (busy_sample.arrivals - mean_arrivals(UNIT, 0))
        assert z_test(summarize(cov), duration_arrivals_covariance(UNIT)).passed

    def test_duration_transform(self, busy_sample):
        for z in (0.3, 1.0, 2.5):
            assert z_test(summarize(np.exp(-z * busy_sample.duration)), duration_lt(UNIT, 0, z)).passed

    def test_joint_transform(self, rng):
        params, c = QueueParams(1.5, 1.2), 1
        batch = simulate_queue_excursions(params, c, 50_000, rng)
        x, y, z = 0.5, 0.3, 0.2
        values = np.exp(-x * batch.duration - y * batch.arrivals - z * batch.area)
        assert z_test(summarize(values), joint_lt(params, c, x, y, z)).passed
