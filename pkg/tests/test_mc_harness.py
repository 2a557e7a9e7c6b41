# tests/test_mc_harness.py
import numpy as np
import pytest
from scipy import stats

from cycle_queue import mc_harness
from cycle_queue.mc_harness import (
    McEstimate,
    batch_means,
    block_stream,
    chi_square_test,
    estimate,
    gof_test,
    replicate,
    summarize,
    z_test,
)
from cycle_queue.utils import DomainError, ReplicateError


class TestStreams:
    def test_block_stream_is_reproducible(self):
        a = block_stream(7, 3, stream=1).random(5)
        b = block_stream(7, 3, stream=1).random(5)
        np.testing.assert_array_equal(a, b)

    def test_blocks_and_streams_differ(self):
        base = block_stream(7, 0).random(5)
        assert not np.array_equal(base, block_stream(7, 1).random(5))
        assert not np.array_equal(base, block_stream(7, 0, stream=2).random(5))

    def test_result_independent_of_worker_count(self, monkeypatch):
        def sampler(rng, size):
            return rng.exponential(1.0, size)

        serial = replicate(sampler, 5000, 11, vectorized=True, block_size=256)
        monkeypatch.setenv("CYCLEQUEUE_THREADS", "4")
        threaded = replicate(sampler, 5000, 11, vectorized=True, block_size=256)
        np.testing.assert_array_equal(serial, threaded)
        assert serial.shape == (5000,)

    def test_scalar_sampler(self):
        values = replicate(lambda rng: rng.integers(0, 10), 50, 3, block_size=16)
        assert values.shape == (50,)
        assert np.all((values >= 0) & (values < 10))

    def test_failing_replicate_is_reported(self):
        calls = {"n": 0}

        def sampler(rng):
            calls["n"] += 1
            if calls["n"] == 5:
                raise ValueError("boom")
            return 1.0

        with pytest.raises(ReplicateError) as info:
            replicate(sampler, 10, 1)
        assert info.value.index == 4
        assert isinstance(info.value.cause, ValueError)


class TestEstimates:
    def test_summarize(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        est = summarize(x, "unit")
        assert est.mean == pytest.approx(2.5)
        assert est.stderr == pytest.approx(np.std(x, ddof=1) / 2.0)
        assert est.n == 4
        assert est.seed_provenance == "unit"

    def test_estimate_normal_mean(self):
        est = estimate(lambda rng, size: rng.normal(3.0, 2.0, size), 20_000, 5, vectorized=True)
        assert z_test(est, 3.0).passed
        assert est.stderr == pytest.approx(2.0 / np.sqrt(20_000), rel=0.05)
        assert "seed=5" in est.seed_provenance

    def test_estimate_needs_two_reps(self):
        with pytest.raises(DomainError):
            estimate(lambda rng: 0.0, 1, 5)


class TestBatchMeans:
    def test_constant_path(self):
        path = np.column_stack((np.arange(100.0), np.ones(100)))
        est = batch_means(path, 10, t_end=100.0)
        assert est.mean == pytest.approx(1.0)
        assert est.stderr == pytest.approx(0.0, abs=1e-15)

    def test_time_weighting(self):
        # value 1 on [0, 3), value 0 on [3, 4): time average 3/4
        path = [(0.0, 1.0), (3.0, 0.0)]
        est = batch_means(path, 10, t_end=4.0)
        assert est.mean == pytest.approx(0.75)

    def test_too_few_batches(self):
        with pytest.raises(DomainError):
            batch_means([(0.0, 1.0), (1.0, 0.0)], 5, t_end=2.0)


class TestZTest:
    def test_zero_stderr_exact_match(self):
        assert z_test(McEstimate(1.0, 0.0, 10), 1.0).passed

    def test_zero_stderr_mismatch(self):
        result = z_test(McEstimate(1.0, 0.0, 10), 1.5)
        assert not result.passed
        assert result.test_kind is mc_harness.TestKind.Z

    def test_window(self):
        assert z_test(McEstimate(1.0, 0.1, 100), 1.35).passed
        assert not z_test(McEstimate(1.0, 0.1, 100), 1.45).passed


class TestGoodnessOfFit:
    def test_chi_square_fair_die(self, rng):
        counts = np.bincount(rng.integers(0, 6, 6000), minlength=6)
        assert chi_square_test(counts, np.full(6, 1 / 6)).passed

    def test_chi_square_rejects_wrong_law(self, rng):
        counts = np.bincount(rng.integers(0, 6, 6000), minlength=6)
        assert not chi_square_test(counts, [0.5, 0.1, 0.1, 0.1, 0.1, 0.1]).passed

    def test_chi_square_needs_probabilities(self):
        with pytest.raises(DomainError):
            chi_square_test([10, 10], [0.6, 0.6])

    def test_poisson_pmf_callable(self, rng):
        samples = rng.poisson(2.0, 5000)
        result = gof_test(samples, stats.poisson(2.0).pmf, mc_harness.TestKind.CHI_SQUARE)
        assert result.passed, result.detail

    def test_poisson_pmf_vector(self, rng):
        samples = rng.poisson(2.0, 5000)
        result = gof_test(samples, stats.poisson(2.0).pmf(np.arange(4)), mc_harness.TestKind.CHI_SQUARE)
        assert result.passed, result.detail

    def test_ks(self, rng):
        assert gof_test(rng.random(4000), stats.uniform.cdf, mc_harness.TestKind.KS).passed
        assert not gof_test(rng.exponential(1.0, 4000), stats.uniform.cdf, mc_harness.TestKind.KS).passed

    def test_needs_enough_samples(self, rng):
        with pytest.raises(DomainError):
            gof_test(rng.random(10), stats.uniform.cdf, mc_harness.TestKind.KS)

    def test_z_kind_is_not_a_gof(self, rng):
        with pytest.raises(DomainError):
            gof_test(rng.random(2000), stats.uniform.cdf, mc_harness.TestKind.Z)
