# cycle_queue/crp_discrete.py
"""
Discrete-time Chinese Restaurant Process on cycle counts.

Exact laws (Ewens sampling formula, p.g.f. of the number of cycles, Poisson limits)
and simulators, including the occupation-time fractions of the singleton count
whose spread does not vanish as the degree grows.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from sympy.utilities.iterables import partitions

from .specials import log_rising_factorial, poisson_pmf
from .utils import DomainError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
EXIT_BLOCK = 256


@dataclass(frozen=True)
class CycleCounts:
    """counts[i] cycles of size i+1; degree is always recomputed from the counts."""
    counts: Tuple[int, ...] = ()
    degree: Optional[int] = None

    def __post_init__(self):
        counts = [int(c) for c in self.counts]
        if any(c < 0 for c in counts):
            raise DomainError(f"cycle counts must be nonnegative, got {counts}")
        while counts and counts[-1] == 0:
            counts.pop()
        total = sum((i + 1) * c for i, c in enumerate(counts))
        if self.degree is not None and self.degree != total:
            raise DomainError(f"counts {counts} describe degree {total}, not {self.degree}")
        object.__setattr__(self, "counts", tuple(counts))
        object.__setattr__(self, "degree", total)

    @classmethod
    def of(cls, *counts: int) -> "CycleCounts":
        return cls(tuple(counts))

    @property
    def n_cycles(self) -> int:
        return sum(self.counts)

    def count(self, size: int) -> int:
        return self.counts[size - 1] if 1 <= size <= len(self.counts) else 0

    def as_vector(self, k: int) -> np.ndarray:
        vec = np.zeros(k, dtype=np.int64)
        head = self.counts[:k]
        vec[: len(head)] = head
        return vec


@dataclass(frozen=True)
class CrpParams:
    theta: float

    def __post_init__(self):
        require(self.theta > 0, f"theta must be positive, got {self.theta}")


@dataclass
class OccupationRecord:
    level: int
    checkpoints: List[Tuple[int, float]] = field(default_factory=list)
    n_max: int = 0
    final: Optional[float] = None


# --- Exact laws ---

def crp_step(state: CycleCounts, params: CrpParams, rng: np.random.Generator) -> CycleCounts:
    """Add element n+1: new cycle w.p. theta/(theta+n), else grow a size-i cycle w.p. i*c_i/(theta+n)."""
    n = state.degree
    u = rng.random() * (params.theta + n)
    counts = list(state.counts)
    if u < params.theta:
        if not counts:
            counts.append(0)
        counts[0] += 1
        return CycleCounts(tuple(counts))
    u -= params.theta
    for i, c in enumerate(counts):
        weight = (i + 1) * c
        if u < weight:
            counts[i] -= 1
            if i + 1 == len(counts):
                counts.append(0)
            counts[i + 1] += 1
            return CycleCounts(tuple(counts), degree=n + 1)
        u -= weight
    # u landed on the upper boundary through rounding: grow the largest cycle
    largest = max(i for i, c in enumerate(counts) if c > 0)
    counts[largest] -= 1
    if largest + 1 == len(counts):
        counts.append(0)
    counts[largest + 1] += 1
    return CycleCounts(tuple(counts), degree=n + 1)


def ewens_pmf(state: CycleCounts, params: CrpParams) -> float:
    """n!/(theta)_n * prod (theta/i)^{c_i} / c_i!"""
    n = state.degree
    if n < 1:
        raise DomainError("Ewens sampling formula needs degree n >= 1")
    log_p = special.gammaln(n + 1) - log_rising_factorial(params.theta, n)
    for i, c in enumerate(state.counts, start=1):
        if c:
            log_p += c * (math.log(params.theta) - math.log(i)) - special.gammaln(c + 1)
    return math.exp(log_p)


def enumerate_partitions(n: int) -> List[CycleCounts]:
    """All cycle types of a permutation of degree n."""
    require(n >= 1, f"n must be positive, got {n}")
    out = []
    for part in partitions(n):
        counts = [0] * n
        for size, mult in part.items():
            counts[size - 1] = mult
        out.append(CycleCounts(tuple(counts)))
    return out


def cycles_pgf(n: int, params: CrpParams, z: float) -> float:
    """E[z^K] for K the number of cycles at degree n: (theta z)_n / (theta)_n."""
    require(n >= 1, f"n must be positive, got {n}")
    theta = params.theta
    return math.prod((theta * z + i) / (theta + i) for i in range(n))


def cycles_pmf(n: int, params: CrpParams) -> np.ndarray:
    """Law of K on 0..n: K is a sum of independent Bernoulli(theta/(theta+i-1)), i = 1..n."""
    require(n >= 1, f"n must be positive, got {n}")
    pmf = np.array([1.0])
    for i in range(1, n + 1):
        p = params.theta / (params.theta + i - 1)
        pmf = np.convolve(pmf, [1.0 - p, p])
    return pmf


def cycles_pgf_bernoulli(n: int, params: CrpParams, z: float) -> float:
    return float(np.polynomial.polynomial.polyval(z, cycles_pmf(n, params)))


def expected_cycles(n: int, params: CrpParams) -> float:
    return math.fsum(params.theta / (params.theta + i) for i in range(n))


def limiting_count_pmf(k: int, params: CrpParams, c: int) -> float:
    """Poisson(theta/k) limit of the number of k-cycles."""
    require(k >= 1, f"cycle size must be positive, got {k}")
    return poisson_pmf(params.theta / k, c)


def singleton_holding_survival(params: CrpParams, c: int, n: int, m: int) -> float:
    """P[C_1 stays at c from degree n through degree m] = prod_{j=n}^{m-1} (j-c)/(j+theta)."""
    require(m >= n >= 1, f"need 1 <= n <= m, got n={n}, m={m}")
    if m == n:
        return 1.0
    if n <= c:
        return 0.0
    theta = params.theta
    log_s = (special.gammaln(m - c) - special.gammaln(n - c)
             + special.gammaln(n + theta) - special.gammaln(m + theta))
    return float(math.exp(log_s))


# --- Simulation ---

def sample_cycle_counts(n: int, params: CrpParams, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Exact CRP cycle counts at degree n for `size` independent paths.

    Row r holds C_1..C_n. Each element opens a new cycle w.p. theta/(theta+m) or joins the
    cycle of a uniformly chosen earlier element (size-biased).
    """
    require(n >= 1 and size >= 1, "n and size must be positive")
    labels = np.empty((size, n), dtype=np.int64)
    labels[:, 0] = 0
    rows = np.arange(size)
    for m in range(1, n):
        new = rng.random(size) < params.theta / (params.theta + m)
        pick = rng.integers(0, m, size=size)
        labels[:, m] = np.where(new, m, labels[rows, pick])
    # cycle sizes per path, then multiplicities of each size
    sizes = np.bincount((labels + rows[:, None] * n).ravel(), minlength=size * n).reshape(size, n)
    counts = np.bincount((sizes + rows[:, None] * (n + 1)).ravel(), minlength=size * (n + 1))
    return counts.reshape(size, n + 1)[:, 1:]


def singleton_counts(params: CrpParams, n: int, size: int, rng: np.random.Generator) -> np.ndarray:
    """C_1 at degree n for `size` paths; the singleton count alone is a Markov chain."""
    require(n >= 1, f"n must be positive, got {n}")
    c1 = np.ones(size, dtype=np.int64)
    for m in range(1, n):
        c1 = _singleton_step(c1, m, params.theta, rng)
    return c1


def _singleton_step(c1: np.ndarray, m: int, theta: float, rng: np.random.Generator) -> np.ndarray:
    u = rng.random(c1.size) * (theta + m)
    return c1 + (u < theta) - ((u >= theta) & (u < theta + c1))


def simulate_tracked_exit(params: CrpParams, tracked: Sequence[int], nu: int, n_paths: int,
                          rng: np.random.Generator, horizon: int,
                          block: int = EXIT_BLOCK) -> Tuple[np.ndarray, np.ndarray]:
    """
    Run the seating rule from degree nu until the counts of the tracked sizes 1..k change.

    tracked holds C_1..C_k at degree nu; the other nu - sum i c_i elements sit in cycles
    longer than k and may grow freely. Element j+1 opens a cycle w.p. theta/(theta+j) or
    joins a size-i cycle w.p. i c_i/(theta+j). Returns (degree M at which the tracked
    counts first change, 0 when still unchanged at `horizon`; cause: 0 for a new cycle,
    i for a size-i cycle growing, -1 if censored).
    """
    vec = np.asarray(tracked, dtype=np.int64)
    sizes = np.arange(1, vec.size + 1)
    inside = int(sizes @ vec)
    rest = nu - inside
    if nu < 1 or rest < 0 or 0 < rest <= vec.size:
        raise DomainError(f"tracked counts {vec.tolist()} cannot sit inside a permutation of degree {nu}")
    require(horizon > nu and n_paths >= 1, "need horizon > nu and n_paths >= 1")
    theta = params.theta
    # cumulative seat weights: new cycle, then each tracked size
    bands = np.cumsum(np.concatenate(([theta], sizes * vec)))
    exit_degree = np.zeros(n_paths, dtype=np.int64)
    cause = np.full(n_paths, -1, dtype=np.int64)
    active = np.arange(n_paths)
    j = nu
    while active.size and j < horizon:
        width = min(block, horizon - j)
        degrees = j + np.arange(width)
        u = rng.random((active.size, width)) * (theta + degrees)
        hit = u < bands[-1]
        done = hit.any(axis=1)
        rows = np.flatnonzero(done)
        first = hit[rows].argmax(axis=1)
        landed = u[rows, first]
        exit_degree[active[done]] = degrees[first] + 1
        cause[active[done]] = np.searchsorted(bands, landed, side="right")
        active = active[~done]
        j += width
    logger.debug(f"tracked exit: {n_paths - active.size}/{n_paths} paths left the state before degree {horizon}")
    return exit_degree, cause


def occupation_fractions(params: CrpParams, level: int, checkpoints: Sequence[int], n_paths: int,
                         rng: np.random.Generator) -> np.ndarray:
    """T_n(level)/n at each checkpoint for `n_paths` paths (shape n_paths x len(checkpoints))."""
    marks = sorted(int(n) for n in checkpoints)
    require(bool(marks) and marks[0] >= 1, "checkpoints must be positive integers")
    c1 = np.ones(n_paths, dtype=np.int64)
    visits = (c1 == level).astype(np.int64)
    out = np.empty((n_paths, len(marks)))
    slot = 0
    for m in range(1, marks[-1] + 1):
        while slot < len(marks) and marks[slot] == m:
            out[:, slot] = visits / m
            slot += 1
        if m == marks[-1]:
            break
        c1 = _singleton_step(c1, m, params.theta, rng)
        visits += c1 == level
    logger.debug(f"occupation fractions at level {level}: {len(marks)} checkpoints, {n_paths} paths")
    return out


def occupation_trajectory(params: CrpParams, level: int, n_max: int, checkpoints: Sequence[int],
                          rng: np.random.Generator) -> OccupationRecord:
    """One path of T_n(level)/n, run to n_max and recorded at the checkpoints."""
    require(n_max >= 1, f"n_max must be positive, got {n_max}")
    marks = list(checkpoints)
    if marks != sorted(marks) or (marks and marks[-1] > n_max):
        raise DomainError("checkpoints must be sorted and not exceed n_max")
    grid = sorted(set(marks) | {n_max})
    fractions = dict(zip(grid, (float(f) for f in occupation_fractions(params, level, grid, 1, rng)[0])))
    return OccupationRecord(level=level, checkpoints=[(m, fractions[m]) for m in marks],
                            n_max=n_max, final=fractions[n_max])


def geometric_checkpoints(n_max: int) -> List[int]:
    """Powers of two up to n_max, plus n_max itself."""
    marks = [2 ** e for e in range(int(math.log2(n_max)) + 1)]
    if marks[-1] != n_max:
        marks.append(n_max)
    return marks
