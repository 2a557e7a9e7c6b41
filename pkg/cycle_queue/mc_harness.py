# cycle_queue/mc_harness.py
"""
Regenerative Monte Carlo machinery.

Replicates are grouped in blocks; block b draws from
    Generator(PCG64(SeedSequence(master_seed, spawn_key=(stream, b))))
so results depend only on (master_seed, stream, n_reps, block_size), never on how
many worker threads ran the blocks. Sums are reduced with numpy's pairwise summation.
"""

import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import stats
from tqdm import tqdm

from .utils import DomainError, ReplicateError, require, worker_count

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
SIGNIFICANCE = 0.001
BLOCK_SIZE = 1024
MIN_GOF_SAMPLES = 1000
MIN_EXPECTED_COUNT = 5.0
MIN_BATCHES = 10
DEFAULT_SIGMAS = 4.0


class TestKind(str, Enum):
    CHI_SQUARE = "chi_square"
    KS = "ks"
    Z = "z"


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    n: int
    seed_provenance: str = ""


@dataclass(frozen=True)
class GofResult:
    statistic: float
    threshold: float
    passed: bool
    test_kind: TestKind
    detail: str = ""


# --- Streams and replication ---

def block_stream(master_seed: int, block: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one replicate block."""
    seq = np.random.SeedSequence(master_seed, spawn_key=(stream, block))
    return np.random.Generator(np.random.PCG64(seq))


def replicate(sampler: Callable, n_reps: int, master_seed: int, *, stream: int = 0, vectorized: bool = False,
              block_size: int = BLOCK_SIZE, progress: bool = False) -> np.ndarray:
    """
    Run `n_reps` replicates and return their outputs in replicate order.

    sampler(rng) -> value, or with vectorized=True sampler(rng, count) -> array of `count` rows.
    """
    require(n_reps >= 1, f"n_reps must be positive, got {n_reps}")
    n_blocks = -(-n_reps // block_size)

    def run_block(block: int) -> np.ndarray:
        rng = block_stream(master_seed, block, stream)
        first = block * block_size
        count = min(block_size, n_reps - first)
        if vectorized:
            try:
                return np.asarray(sampler(rng, count), dtype=float)
            except ReplicateError:
                raise
            except Exception as e:
                raise ReplicateError(first, e) from e
        values = []
        for i in range(count):
            try:
                values.append(sampler(rng))
            except Exception as e:
                raise ReplicateError(first + i, e) from e
        return np.asarray(values, dtype=float)

    workers = min(worker_count(), n_blocks)
    logger.debug(f"replicate: {n_reps} reps in {n_blocks} blocks on {workers} worker(s), stream {stream}")
    with tqdm(total=n_blocks, disable=not progress, file=sys.stderr, desc="replicates", leave=False) as bar:
        if workers > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                chunks = []
                for chunk in pool.map(run_block, range(n_blocks)):
                    chunks.append(chunk)
                    bar.update(1)
        else:
            chunks = []
            for block in range(n_blocks):
                chunks.append(run_block(block))
                bar.update(1)
    return np.concatenate(chunks, axis=0)


def summarize(samples: Sequence[float], provenance: str = "") -> McEstimate:
    x = np.asarray(samples, dtype=float).ravel()
    n = x.size
    require(n >= 2, f"an estimate needs at least 2 samples, got {n}")
    mean = float(np.sum(x) / n)
    stderr = float(np.sqrt(np.sum((x - mean) ** 2) / (n - 1) / n))
    return McEstimate(mean=mean, stderr=stderr, n=n, seed_provenance=provenance)


def estimate(sampler: Callable, n_reps: int, master_seed: int, *, stream: int = 0, vectorized: bool = False,
             block_size: int = BLOCK_SIZE, progress: bool = False) -> McEstimate:
    """Mean and standard error of i.i.d. replicates."""
    require(n_reps >= 2, f"n_reps must be at least 2, got {n_reps}")
    values = replicate(sampler, n_reps, master_seed, stream=stream, vectorized=vectorized,
                       block_size=block_size, progress=progress)
    provenance = f"seed={master_seed};stream={stream};block={block_size};n={n_reps}"
    return summarize(values, provenance)


# --- Stationary averages ---

def batch_means(path_values, n_batches: int = 20, t_end: Optional[float] = None,
                provenance: str = "") -> McEstimate:
    """
    Time average of a piecewise-constant path split into equal-length batches.

    path_values: sequence of (time, value); each value holds until the next time,
    the last one until t_end (defaults to the last time).
    """
    if n_batches < MIN_BATCHES:
        raise DomainError(f"batch means needs at least {MIN_BATCHES} batches, got {n_batches}")
    arr = np.asarray(path_values, dtype=float)
    times, values = arr[:, 0], arr[:, 1]
    end = times[-1] if t_end is None else float(t_end)
    require(end > times[0], "path must have positive duration")
    require(bool(np.all(np.diff(times) >= 0)), "path times must be nondecreasing")

    widths = np.diff(np.append(times, end))
    cumulative = np.concatenate(([0.0], np.cumsum(values * widths)))

    def integral_to(x: np.ndarray) -> np.ndarray:
        idx = np.clip(np.searchsorted(times, x, side="right") - 1, 0, times.size - 1)
        return cumulative[idx] + values[idx] * (x - times[idx])

    edges = np.linspace(times[0], end, n_batches + 1)
    averages = np.diff(integral_to(edges)) / np.diff(edges)
    mean = float(np.mean(averages))
    stderr = float(np.std(averages, ddof=1) / np.sqrt(n_batches))
    return McEstimate(mean=mean, stderr=stderr, n=n_batches, seed_provenance=provenance)


# --- Tests ---

def z_test(est: McEstimate, target: float, n_sigmas: float = DEFAULT_SIGMAS) -> GofResult:
    gap = abs(est.mean - target)
    if est.stderr > 0:
        statistic = gap / est.stderr
        detail = f"mean {est.mean:.6g} vs target {target:.6g}, se {est.stderr:.3g}"
    elif gap == 0:
        statistic, detail = 0.0, "exact match with zero standard error"
    else:
        statistic = float("inf")
        detail = f"zero standard error but mean {est.mean!r} != target {target!r}"
        logger.warning(detail)
    return GofResult(statistic, n_sigmas, statistic <= n_sigmas, TestKind.Z, detail)


def _merge_bins(observed: np.ndarray, expected: np.ndarray):
    merged_o, merged_e = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= MIN_EXPECTED_COUNT:
            merged_o.append(acc_o)
            merged_e.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if merged_e:
            merged_o[-1] += acc_o
            merged_e[-1] += acc_e
        else:
            merged_o.append(acc_o)
            merged_e.append(acc_e)
    return np.asarray(merged_o), np.asarray(merged_e)


def chi_square_test(observed: Sequence[float], probabilities: Sequence[float],
                    significance: float = SIGNIFICANCE) -> GofResult:
    """Pearson test of category counts against probabilities; small bins are merged."""
    obs = np.asarray(observed, dtype=float)
    probs = np.asarray(probabilities, dtype=float)
    if obs.shape != probs.shape:
        raise DomainError("observed counts and probabilities must have the same shape")
    if np.any(probs < 0) or not np.isclose(probs.sum(), 1.0, atol=1e-9):
        raise DomainError(f"reference probabilities must be nonnegative and sum to 1 (sum={probs.sum():.12g})")
    n = obs.sum()
    o, e = _merge_bins(obs, probs * n)
    if o.size < 2:
        raise DomainError("reference is degenerate: fewer than two bins after merging")
    statistic = float(np.sum((o - e) ** 2 / e))
    dof = o.size - 1
    threshold = float(stats.chi2.ppf(1.0 - significance, dof))
    return GofResult(statistic, threshold, statistic <= threshold, TestKind.CHI_SQUARE,
                     f"{o.size} bins, dof {dof}, n {int(n)}")


def gof_test(samples, reference: Union[Callable, Sequence[float]], kind: TestKind,
             significance: float = SIGNIFICANCE) -> GofResult:
    """
    Goodness of fit at the fixed significance level.

    chi_square: integer samples; reference is a pmf callable on 0, 1, ... or a probability
    vector indexed by value (the mass not listed becomes an upper tail bin).
    ks: real samples; reference is a vectorized CDF.
    """
    kind = TestKind(kind)
    x = np.asarray(samples)
    if x.size < MIN_GOF_SAMPLES:
        raise DomainError(f"goodness of fit needs at least {MIN_GOF_SAMPLES} samples, got {x.size}")

    if kind is TestKind.KS:
        result = stats.kstest(x.astype(float), reference)
        threshold = float(stats.kstwo.ppf(1.0 - significance, x.size))
        statistic = float(result.statistic)
        return GofResult(statistic, threshold, statistic <= threshold, kind, f"p={result.pvalue:.4g}")

    if kind is TestKind.CHI_SQUARE:
        values = x.astype(np.int64)
        if np.any(values < 0):
            raise DomainError("chi-square samples must be nonnegative integers")
        top = int(values.max())
        if callable(reference):
            probs = np.array([reference(c) for c in range(top + 1)], dtype=float)
        else:
            probs = np.asarray(reference, dtype=float)[: top + 1]
            if probs.size < top + 1:
                probs = np.concatenate((probs, np.zeros(top + 1 - probs.size)))
        tail = 1.0 - probs.sum()
        if tail < -1e-9 or np.any(probs < 0):
            raise DomainError("reference pmf has negative mass or total above 1")
        observed = np.bincount(values, minlength=top + 1).astype(float)
        # mass above the largest sample lands in the last bin
        observed = np.append(observed, 0.0)
        probs = np.append(probs, max(tail, 0.0))
        return chi_square_test(observed, probs / probs.sum(), significance)

    raise DomainError(f"gof_test does not run {kind.value} tests; use z_test")
