# tests/test_tandem_ct.py
import math

import numpy as np
import pandas as pd
import pytest
from scipy import stats

from cycle_queue.crp_discrete import CycleCounts
from cycle_queue.mc_harness import TestKind as Gof
from cycle_queue.mc_harness import McEstimate, chi_square_test, gof_test, summarize, z_test
from cycle_queue.specials import exp_integral_e1, harmonic
from cycle_queue.tandem_ct import (
    TandemParams,
    TrackingMode,
    departures,
    derangement_fraction,
    max_cycle_cdf,
    max_cycle_limit_cdf,
    pascal_increment_pmf,
    pascal_tail_bound,
    pascalisation_check,
    prm_mean_measure_tail,
    prm_points,
    prm_prelimit_tail,
    sample_max_cycle,
    simulate_tandem,
    sojourn_rate,
    steady_initial,
    steady_state_pmf,
    tandem_state_at,
    time_change_sojourn_check,
    transient_marginal_mean,
    write_event_path_csv,
)
from cycle_queue.utils import DomainError


class TestExactLaws:
    def test_params_validation(self):
        with pytest.raises(DomainError):
            TandemParams(1.0, k=0)
        with pytest.raises(DomainError):
            TandemParams(-1.0)

    def test_marginal_mean(self):
        params = TandemParams(2.0, k=3)
        assert transient_marginal_mean(params, 2, 1.0) == pytest.approx(2.0 * (1 - math.exp(-1.0)) ** 2 / 2)
        assert transient_marginal_mean(params, 1, 0.0) == 0.0
        with pytest.raises(DomainError):
            transient_marginal_mean(params, 4, 1.0)

    def test_steady_state_empty(self):
        params = TandemParams(1.5, k=4)
        assert steady_state_pmf(params, [0, 0, 0, 0]) == pytest.approx(math.exp(-1.5 * harmonic(4)))

    def test_steady_state_sums_to_one(self):
        params = TandemParams(1.0, k=2)
        total = math.fsum(steady_state_pmf(params, [a, b]) for a in range(30) for b in range(30))
        assert total == pytest.approx(1.0, abs=1e-12)
        with pytest.raises(DomainError):
            steady_state_pmf(params, [0])

    def test_pascal_increment_law(self):
        params = TandemParams(1.3)
        n, dt = 4, 0.7
        pmf = np.array([pascal_increment_pmf(params, n, dt, j) for j in range(400)])
        assert pmf.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.dot(np.arange(400), pmf) == pytest.approx((1.3 + n) * math.expm1(dt), rel=1e-10)

    @pytest.mark.parametrize("theta", [1.0, 1.3])
    @pytest.mark.parametrize("t", [1.0, 2.0])
    @pytest.mark.parametrize("z", [0.3, 0.5, 1.0])
    def test_pascalisation_identity(self, theta, t, z):
        assert pascalisation_check(TandemParams(theta), t, z) < 1e-8

    def test_pascal_tail_bound_is_small(self):
        assert pascal_tail_bound(TandemParams(1.3), 2.0, 200) < 1e-10


class TestLargestCycle:
    def test_limit_measure(self):
        assert prm_mean_measure_tail(2.0, 0.5) == pytest.approx(2.0 * exp_integral_e1(0.5))
        assert max_cycle_limit_cdf(1.0, 1.0) == pytest.approx(math.exp(-exp_integral_e1(1.0)))

    def test_prelimit_tail_converges(self):
        for x in (0.3, 1.0, 2.5):
            assert prm_prelimit_tail(1.0, x, 12.0) == pytest.approx(prm_mean_measure_tail(1.0, x), rel=1e-3)

    def test_finite_time_cdf_matches_poisson_product(self):
        theta, t, m = 1.4, 1.5, 6
        y = 1 - math.exp(-t)
        direct = math.exp(-theta * sum(y ** j / j for j in range(m + 1, 2000)))
        assert max_cycle_cdf(theta, t, m) == pytest.approx(direct, rel=1e-12)
        assert max_cycle_cdf(theta, t, -1) == 0.0

    def test_sampled_maximum_at_finite_time(self, rng):
        theta, t = 1.0, 2.0
        samples = sample_max_cycle(theta, t, 20_000, rng)
        top = int(samples.max())
        cdf = np.array([max_cycle_cdf(theta, t, m) for m in range(top + 1)])
        probs = np.append(np.diff(cdf, prepend=0.0), 1.0 - cdf[-1])
        observed = np.append(np.bincount(samples, minlength=top + 1), 0)
        result = chi_square_test(observed, probs)
        assert result.passed, result.detail

    def test_scaled_maximum_near_limit(self, rng):
        t = 8.0
        scaled = sample_max_cycle(1.0, t, 10_000, rng) * math.exp(-t)

        def limit_cdf(x):
            x = np.atleast_1d(np.asarray(x, dtype=float))
            return np.array([max_cycle_limit_cdf(1.0, v) if v > 0 else 0.0 for v in x])

        result = gof_test(scaled, limit_cdf, Gof.KS)
        assert result.passed, result.detail

    def test_prm_points(self, rng):
        points = prm_points(1.0, 5.0, rng)
        assert all(p.location > 0 and p.mass >= 1 for p in points)
        locations = [p.location for p in points]
        assert locations == sorted(locations)


class TestSimulation:
    def test_open_path_consistency(self, rng):
        params = TandemParams(1.0, k=3)
        path = simulate_tandem(params, 50.0, CycleCounts.of(2, 1), rng)
        assert np.all(np.diff(path.times) > 0)
        np.testing.assert_array_equal(path.degree, path.states @ np.arange(1, 4))
        assert path.moves.min() >= 0 and path.moves.max() <= 3
        np.testing.assert_array_equal(path.state_at(0.0), [2, 1, 0])
        assert departures(path, 1).size == np.count_nonzero(path.moves == 1)

    def test_full_path_counts_every_element(self, rng):
        params = TandemParams(1.0, k=2)
        initial = CycleCounts.of(1, 0, 0, 1)
        path = simulate_tandem(params, 20.0, initial, rng, mode=TrackingMode.FULL)
        n_events = path.moves.size
        assert path.degree[-1] == initial.degree + n_events
        births = np.count_nonzero(path.moves == 0)
        assert path.n_cycles[-1] == initial.n_cycles + births
        assert np.all(np.diff(path.max_cycle) >= 0)

    @pytest.mark.slow
    @pytest.mark.parametrize("t", [0.5, 1.0, 2.0])
    def test_marginals_are_poisson(self, t):
        params = TandemParams(1.0, k=3)
        snap = tandem_state_at(params, t, CycleCounts(), np.random.default_rng(int(100 * t)), size=100_000)
        for i in range(1, 4):
            mean = transient_marginal_mean(params, i, t)
            result = gof_test(snap.counts[:, i - 1], stats.poisson(mean).pmf, Gof.CHI_SQUARE)
            assert result.passed, (i, result.detail)
        for i, j in ((0, 1), (0, 2), (1, 2)):
            a, b = snap.counts[:, i], snap.counts[:, j]
            assert z_test(summarize((a - a.mean()) * (b - b.mean())), 0.0).passed, (i + 1, j + 1)

    @pytest.mark.parametrize("phase", [1, 2, 3])
    def test_steady_departures_are_poisson(self, phase):
        # each phase of the stationary tandem emits a Poisson(theta) stream
        params, t_end = TandemParams(1.0, k=3), 6000.0
        rng = np.random.default_rng(40 + phase)
        path = simulate_tandem(params, t_end, steady_initial(params, rng), rng)
        times = departures(path, phase)
        gaps = np.diff(times)
        result = gof_test(gaps, stats.expon(scale=1.0 / params.theta).cdf, Gof.KS)
        assert result.passed, result.detail
        assert z_test(McEstimate(mean=times.size, stderr=math.sqrt(params.theta * t_end), n=1),
                      params.theta * t_end).passed

    def test_full_mode_degree_is_negative_binomial(self, rng):
        params, t = TandemParams(1.0, k=2), 1.0
        snap = tandem_state_at(params, t, CycleCounts(), rng, mode=TrackingMode.FULL, size=20_000)
        result = gof_test(snap.degree, stats.nbinom(1.0, math.exp(-t)).pmf, Gof.CHI_SQUARE)
        assert result.passed, result.detail

    def test_steady_start_stays_steady(self, rng):
        params = TandemParams(1.5, k=2)
        snap = tandem_state_at(params, 2.0, None, rng, size=20_000)
        assert z_test(summarize(snap.counts[:, 1]), 1.5 / 2).passed
        assert steady_initial(params, rng).degree >= 0

    @pytest.mark.parametrize("theta", [0.5, 1.0])
    def test_derangement_time_average(self, rng, theta):
        params = TandemParams(theta, k=1)
        path = simulate_tandem(params, 4000.0, steady_initial(params, rng), rng)
        assert z_test(derangement_fraction(path), math.exp(-theta)).passed

    def test_csv_export(self, rng, tmp_path):
        path = simulate_tandem(TandemParams(1.0, k=2), 5.0, CycleCounts(), rng)
        out = write_event_path_csv(path, tmp_path / "path.csv")
        frame = pd.read_csv(out)
        assert list(frame.columns) == ["time", "c1", "c2", "K", "N"]
        assert len(frame) == path.times.size


class TestTimeChange:
    def test_sojourn_rate(self):
        params = TandemParams(1.0, k=2)
        assert sojourn_rate(params, CycleCounts.of(1, 2, 5)) == pytest.approx(1.0 + 1 + 4)

    @pytest.mark.slow
    @pytest.mark.parametrize("k, state", [(1, CycleCounts()), (2, CycleCounts()), (2, CycleCounts.of(1, 0))])
    def test_rescaled_exit_is_exponential(self, k, state):
        params = TandemParams(1.0, k=k)
        summary = time_change_sojourn_check(params, state, 10_000, 15_000, np.random.default_rng(1000 + k))
        assert summary.rate == pytest.approx(sojourn_rate(params, state))
        assert summary.ks_statistic < 0.02

    def test_exit_causes_follow_seat_weights(self, rng):
        params = TandemParams(1.0, k=2)
        summary = time_change_sojourn_check(params, CycleCounts.of(1, 0), 2000, 5000, rng)
        assert summary.rate == pytest.approx(2.0)
        assert summary.pvalue > 0.001
        # a new cycle (weight theta) or the singleton growing (weight 1); nothing else moves C_1, C_2
        causes = summary.exit_causes
        assert causes.size == 3 and causes[2] == 0
        result = chi_square_test(causes[:2], [0.5, 0.5])
        assert result.passed, result.detail

    def test_censored_samples_sit_at_horizon(self, rng):
        params = TandemParams(1.0, k=1)
        summary = time_change_sojourn_check(params, CycleCounts(), 1000, 4000, rng, horizon_factor=1.5)
        assert summary.log_horizon == pytest.approx(math.log(1.5))
        assert np.all(summary.samples <= summary.log_horizon + 1e-12)
        assert np.count_nonzero(np.isclose(summary.samples, summary.log_horizon)) >= summary.censored
        flags = np.repeat([1.0, 0.0], [summary.censored, summary.n_samples - summary.censored])
        # no change over degrees 1000..1499 has probability 1000/1500
        assert z_test(summarize(flags), 2.0 / 3.0).passed

    def test_unreachable_state(self, rng):
        params = TandemParams(0.5, k=3)
        with pytest.raises(DomainError):
            time_change_sojourn_check(params, CycleCounts.of(0, 0, 4), 5, 100, rng)
