# cycle_queue/tandem_ct.py
"""
Continuous-time cycle-count process.

A new cycle is born at rate theta and every cycle of size i grows to i+1 at rate i,
so the counts C_1(t), ..., C_k(t) form a tandem of infinite-server phases. This module
holds the exact event-driven simulator, the product-Poisson laws, the Pascal (negative
binomial) degree process, the largest-cycle law and the time-change sojourn check.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from scipy import stats

from .crp_discrete import CrpParams, CycleCounts, simulate_tracked_exit
from .mc_harness import McEstimate, batch_means
from .specials import exp_integral_e1, poisson_pmf
from .utils import DomainError, SimulationCapError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
DEFAULT_K = 10
DEFAULT_EVENT_CAP = 10_000_000
SERIES_CHUNK = 4096
SERIES_REL_TOL = 1e-15
TIME_CHANGE_HORIZON = 20.0


class TrackingMode(str, Enum):
    OPEN = "open"  # cycles growing past size k leave the system
    FULL = "full"  # cycles past size k stay in an overflow tail


@dataclass(frozen=True)
class TandemParams:
    theta: float
    k: int = DEFAULT_K

    def __post_init__(self):
        require(self.theta > 0, f"theta must be positive, got {self.theta}")
        require(self.k >= 1, f"k must be at least 1, got {self.k}")


@dataclass(frozen=True)
class PrmPoint:
    location: float
    mass: int

    def __post_init__(self):
        require(self.location > 0 and self.mass >= 1, f"invalid PRM point {self}")


@dataclass
class EventPath:
    """
    Jump record of one trajectory. Row 0 is the initial state at time 0; row e > 0 is the
    state right after event e. moves[e-1] is 0 for a birth and i for a cycle growing from
    size i (i > k means an overflow cycle grew).
    """
    times: np.ndarray
    states: np.ndarray
    moves: np.ndarray
    degree: np.ndarray
    n_cycles: np.ndarray
    max_cycle: np.ndarray
    t_end: float
    mode: TrackingMode = TrackingMode.OPEN

    @property
    def k(self) -> int:
        return int(self.states.shape[1])

    @property
    def events(self) -> Iterator[Tuple[float, CycleCounts]]:
        for t, row in zip(self.times, self.states):
            yield float(t), CycleCounts(tuple(int(c) for c in row))

    def index_at(self, t: float) -> int:
        require(0 <= t <= self.t_end, f"time {t} outside [0, {self.t_end}]")
        return int(np.searchsorted(self.times, t, side="right") - 1)

    def state_at(self, t: float) -> np.ndarray:
        return self.states[self.index_at(t)]

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame(self.states, columns=[f"c{i}" for i in range(1, self.k + 1)])
        frame.insert(0, "time", self.times)
        frame["K"] = self.n_cycles
        frame["N"] = self.degree
        return frame


@dataclass
class TandemSnapshot:
    """States at a fixed time for many independent paths."""
    counts: np.ndarray
    degree: np.ndarray
    n_cycles: np.ndarray


@dataclass(frozen=True)
class TimeChangeSummary:
    rate: float
    ks_statistic: float
    pvalue: float
    n_samples: int
    censored: int
    log_horizon: float
    exit_causes: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0, dtype=np.int64))
    samples: np.ndarray = field(repr=False, default_factory=lambda: np.empty(0))


# --- Simulation ---

def steady_initial(params: TandemParams, rng: np.random.Generator) -> CycleCounts:
    """C_i(0) ~ Poisson(theta/i) independently for i <= k."""
    means = params.theta / np.arange(1, params.k + 1)
    return CycleCounts(tuple(int(c) for c in rng.poisson(means)))


def simulate_tandem(params: TandemParams, t_end: float, initial: CycleCounts, rng: np.random.Generator,
                    mode: TrackingMode = TrackingMode.OPEN, max_events: int = DEFAULT_EVENT_CAP) -> EventPath:
    """Exact jump simulation on [0, t_end] (Gillespie)."""
    require(t_end > 0, f"t_end must be positive, got {t_end}")
    mode = TrackingMode(mode)
    k, theta = params.k, params.theta
    state = initial.as_vector(k)
    sizes = np.arange(1, k + 1)
    overflow: List[int] = []
    if mode is TrackingMode.FULL:
        for size, count in enumerate(initial.counts[k:], start=k + 1):
            overflow.extend([size] * count)
    overflow_mass = sum(overflow)

    times, states, moves = [0.0], [state.copy()], []
    degree = [int(sizes @ state) + overflow_mass]
    n_cycles = [int(state.sum()) + len(overflow)]
    max_cycle = [_largest(state, overflow)]

    t = 0.0
    while True:
        weights = sizes * state
        total = theta + weights.sum() + overflow_mass
        t += rng.exponential(1.0 / total)
        if t > t_end:
            break
        if len(moves) >= max_events:
            raise SimulationCapError(f"more than {max_events} events before t={t_end}")
        u = rng.random() * total
        if u < theta:
            state[0] += 1
            move = 0
        else:
            u -= theta
            cum = np.cumsum(weights)
            i = int(np.searchsorted(cum, u, side="right"))
            if i >= k and not overflow:
                i = int(np.nonzero(weights)[0][-1])  # rounding at the upper edge
            if i < k:
                state[i] -= 1
                if i + 1 < k:
                    state[i + 1] += 1
                elif mode is TrackingMode.FULL:
                    overflow.append(k + 1)
                    overflow_mass += k + 1
                move = i + 1
            else:
                # an overflow cycle grows, chosen proportionally to its size
                u -= cum[-1]
                j = min(int(np.searchsorted(np.cumsum(overflow), u, side="right")), len(overflow) - 1)
                move = overflow[j]
                overflow[j] += 1
                overflow_mass += 1
        times.append(t)
        states.append(state.copy())
        moves.append(move)
        degree.append(int(sizes @ state) + overflow_mass)
        n_cycles.append(int(state.sum()) + len(overflow))
        max_cycle.append(_largest(state, overflow))

    logger.debug(f"tandem path: {len(moves)} events on [0, {t_end}] ({mode.value} mode)")
    return EventPath(times=np.asarray(times), states=np.asarray(states, dtype=np.int64),
                     moves=np.asarray(moves, dtype=np.int64), degree=np.asarray(degree, dtype=np.int64),
                     n_cycles=np.asarray(n_cycles, dtype=np.int64), max_cycle=np.asarray(max_cycle, dtype=np.int64),
                     t_end=float(t_end), mode=mode)


def _largest(state: np.ndarray, overflow: Sequence[int]) -> int:
    if overflow:
        return max(overflow)
    occupied = np.nonzero(state)[0]
    return int(occupied[-1] + 1) if occupied.size else 0


def tandem_state_at(params: TandemParams, t: float, initial: Optional[CycleCounts], rng: np.random.Generator,
                    mode: TrackingMode = TrackingMode.OPEN, size: int = 1,
                    max_events: int = DEFAULT_EVENT_CAP) -> TandemSnapshot:
    """
    State at time t for `size` independent paths, all advanced event by event together.

    initial=None starts every path from the product-Poisson steady state. In FULL mode the
    overflow cycles are tracked by their count and total size, which fixes their growth rate.
    """
    require(t > 0, f"t must be positive, got {t}")
    mode = TrackingMode(mode)
    k, theta = params.k, params.theta
    sizes = np.arange(1, k + 1)
    if initial is None:
        counts = rng.poisson(theta / sizes, size=(size, k)).astype(np.int64)
        over_n = np.zeros(size, dtype=np.int64)
        over_mass = np.zeros(size, dtype=np.int64)
    else:
        counts = np.tile(initial.as_vector(k), (size, 1))
        tail = initial.counts[k:] if mode is TrackingMode.FULL else ()
        over_n = np.full(size, sum(tail), dtype=np.int64)
        over_mass = np.full(size, sum(c * s for s, c in enumerate(tail, start=k + 1)), dtype=np.int64)
    if mode is TrackingMode.OPEN:
        over_mass[:] = 0

    clock = np.zeros(size)
    active = np.arange(size)
    events = 0
    while active.size:
        if events >= max_events:
            raise SimulationCapError(f"paths still running after {max_events} events")
        c = counts[active]
        weights = c * sizes
        track_rate = weights.sum(axis=1)
        total = theta + track_rate + over_mass[active]
        clock[active] += rng.exponential(1.0, active.size) / total
        alive = clock[active] <= t
        active, c, weights, total = active[alive], c[alive], weights[alive], total[alive]
        if not active.size:
            break
        u = rng.random(active.size) * total
        birth = u < theta
        cum = np.cumsum(weights, axis=1)
        phase = np.sum(cum <= (u - theta)[:, None], axis=1)  # 0-based size index, k = overflow
        rows = np.arange(active.size)
        grow = ~birth & (phase < k)
        c[birth, 0] += 1
        c[rows[grow], phase[grow]] -= 1
        moves_on = grow & (phase + 1 < k)
        c[rows[moves_on], phase[moves_on] + 1] += 1
        leaves = grow & (phase + 1 == k)
        if mode is TrackingMode.FULL:
            over_n[active[leaves]] += 1
            over_mass[active[leaves]] += k + 1
            over_mass[active[~birth & (phase >= k)]] += 1
        counts[active] = c
        events += 1

    degree = counts @ sizes + over_mass
    n_cycles = counts.sum(axis=1) + over_n
    return TandemSnapshot(counts=counts, degree=degree, n_cycles=n_cycles)


def departures(path: EventPath, phase: int) -> np.ndarray:
    """Times at which a cycle left the given phase (grew past that size)."""
    require(phase >= 1, f"phase must be positive, got {phase}")
    return path.times[1:][path.moves == phase]


def derangement_fraction(path: EventPath, n_batches: int = 20) -> McEstimate:
    """Time-weighted fraction with no singleton cycles, with batch-means error bars."""
    values = (path.states[:, 0] == 0).astype(float)
    return batch_means(np.column_stack((path.times, values)), n_batches=n_batches, t_end=path.t_end)


def write_event_path_csv(path: EventPath, destination: Union[str, Path]) -> Path:
    destination = Path(destination)
    path.to_frame().to_csv(destination, index=False, float_format="%.12g")
    logger.info(f"wrote {len(path.times)} path rows to {destination}")
    return destination


# --- Exact laws ---

def transient_marginal_mean(params: TandemParams, i: int, t: float) -> float:
    """E[C_i(t)] = theta (1 - e^{-t})^i / i from an empty start."""
    require(1 <= i <= params.k, f"phase must lie in 1..{params.k}, got {i}")
    require(t >= 0, f"t must be nonnegative, got {t}")
    return params.theta * (-math.expm1(-t)) ** i / i


def steady_state_pmf(params: TandemParams, state: Sequence[int]) -> float:
    """Product-Poisson limit e^{-theta h_k} prod theta^{c_i} / (i^{c_i} c_i!)."""
    if len(state) != params.k:
        raise DomainError(f"state must have length k={params.k}, got {len(state)}")
    return math.prod(poisson_pmf(params.theta / i, int(c)) for i, c in enumerate(state, start=1))


def pascal_increment_pmf(params: TandemParams, n: int, dt: float, j: int) -> float:
    """P[j new elements in (s, s+dt] | N(s) = n] = NB(theta+n, 1-e^{-dt}) at j."""
    require(dt > 0, f"dt must be positive, got {dt}")
    require(n >= 0, f"degree must be nonnegative, got {n}")
    return float(stats.nbinom.pmf(j, params.theta + n, math.exp(-dt)))


def pascal_tail_bound(params: TandemParams, t: float, n_terms: int) -> float:
    """P[N(t) > n_terms] from an empty start."""
    return float(stats.nbinom.sf(n_terms, params.theta, math.exp(-t)))


def pascalisation_check(params: TandemParams, t: float, z: float, n_terms: int = 200) -> float:
    """
    |sum_n P[N(t)=n] (theta z)_n/(theta)_n - e^{theta t (z-1)}|.

    Each p.g.f. value lies in [0, 1] for z in [0, 1], so truncation costs at most P[N(t) > n_terms].
    """
    require(t > 0, f"t must be positive, got {t}")
    require(0 <= z <= 1, f"z must lie in [0, 1], got {z}")
    theta = params.theta
    weights = stats.nbinom.pmf(np.arange(n_terms + 1), theta, math.exp(-t))
    ratios = np.cumprod(np.concatenate(([1.0], (theta * z + np.arange(n_terms)) / (theta + np.arange(n_terms)))))
    residual = abs(float(np.sum(weights * ratios)) - math.exp(theta * t * (z - 1.0)))
    bound = pascal_tail_bound(params, t, n_terms)
    if residual > bound + 1e-13:
        logger.warning(f"pascalisation residual {residual:.3g} exceeds truncation bound {bound:.3g}")
    return residual


def _log_series_tail(y: float, m: int) -> float:
    """sum_{j>m} y^j / j for 0 < y < 1, summed in chunks with a geometric remainder bound."""
    if y <= 0:
        return 0.0
    log_y = math.log(y)
    total = 0.0
    start = m + 1
    while True:
        j = np.arange(start, start + SERIES_CHUNK, dtype=float)
        total += float(np.sum(np.exp(j * log_y) / j))
        nxt = start + SERIES_CHUNK
        remainder = math.exp(nxt * log_y) / (nxt * (1.0 - y))
        if remainder <= SERIES_REL_TOL * total or total == 0.0:
            return total
        start = nxt


def prm_mean_measure_tail(theta: float, x: float) -> float:
    """lambda(x, inf) = theta E1(x) for the limit intensity theta e^{-x} dx / x."""
    require(theta > 0, f"theta must be positive, got {theta}")
    return theta * exp_integral_e1(x)


def prm_prelimit_tail(theta: float, x: float, t: float) -> float:
    """theta sum_{j > floor(x e^t)} (1 - e^{-t})^j / j."""
    require(x > 0, f"x must be positive, got {x}")
    return theta * _log_series_tail(-math.expm1(-t), int(math.floor(x * math.exp(t))))


def max_cycle_limit_cdf(theta: float, x: float) -> float:
    """lim P[e^{-t} M(t) <= x] = exp(-theta E1(x))."""
    return math.exp(-prm_mean_measure_tail(theta, x))


def max_cycle_cdf(theta: float, t: float, m: int) -> float:
    """P[M(t) <= m] from an empty start."""
    require(t > 0, f"t must be positive, got {t}")
    if m < 0:
        return 0.0
    return math.exp(-theta * _log_series_tail(-math.expm1(-t), m))


def sample_max_cycle(theta: float, t: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """
    Largest cycle M(t) for `size` paths: Poisson(theta t) births at uniform times s, each cycle
    growing as a Yule process to a Geometric(e^{-(t-s)}) size at time t.
    """
    births = rng.poisson(theta * t, size=size)
    owner = np.repeat(np.arange(size), births)
    ages = rng.random(owner.size) * t
    cycle_sizes = rng.geometric(np.exp(-ages))
    largest = np.zeros(size, dtype=np.int64)
    np.maximum.at(largest, owner, cycle_sizes)
    return largest


def prm_points(theta: float, t: float, rng: np.random.Generator) -> List[PrmPoint]:
    """Scaled cycle sizes e^{-t} i with their multiplicities for one path at time t."""
    births = rng.poisson(theta * t)
    sizes = rng.geometric(np.exp(-rng.random(births) * t))
    values, mult = np.unique(sizes, return_counts=True)
    scale = math.exp(-t)
    return [PrmPoint(location=float(v) * scale, mass=int(c)) for v, c in zip(values, mult)]


# --- Time-change check ---

def sojourn_rate(params: TandemParams, state: CycleCounts) -> float:
    """r = theta + sum_{i<=k} i c_i."""
    vec = state.as_vector(params.k)
    return params.theta + float(np.arange(1, params.k + 1) @ vec)


def time_change_sojourn_check(params: TandemParams, state: CycleCounts, nu: int, n_samples: int,
                              rng: np.random.Generator,
                              horizon_factor: float = TIME_CHANGE_HORIZON) -> TimeChangeSummary:
    """
    Run the discrete CRP from degree nu in the given truncated state and compare log(M/nu)
    with Exp(r), where M is the first degree at which the counts C_1..C_k change.

    Paths still in the state at degree nu * horizon_factor are censored there; the KS
    distance is taken over the uncensored range plus the censored mass.
    """
    require(nu >= 1 and n_samples >= 1, "nu and n_samples must be positive")
    require(horizon_factor > 1, f"horizon_factor must exceed 1, got {horizon_factor}")
    r = sojourn_rate(params, state)
    horizon = int(math.ceil(nu * horizon_factor))
    exit_degree, cause = simulate_tracked_exit(CrpParams(params.theta), state.as_vector(params.k), nu,
                                               n_samples, rng, horizon)
    log_horizon = math.log(horizon / nu)
    left = exit_degree > 0
    samples = np.where(left, np.log(np.maximum(exit_degree, 1) / nu), log_horizon)

    reference = stats.expon(scale=1.0 / r)
    observed = np.sort(samples[left])
    cdf = reference.cdf(observed)
    ranks = np.arange(1, observed.size + 1)
    gaps = [np.max(ranks / n_samples - cdf, initial=0.0), np.max(cdf - (ranks - 1) / n_samples, initial=0.0),
            abs(reference.cdf(log_horizon) - observed.size / n_samples)]
    statistic = float(max(gaps))
    pvalue = float(stats.kstwo.sf(statistic, n_samples))
    causes = np.bincount(cause[left], minlength=params.k + 1)
    logger.info(f"time-change check: r={r:g}, KS={statistic:.4f}, p={pvalue:.3g}, "
                f"{n_samples - int(left.sum())} censored at log horizon {log_horizon:.3f}")
    return TimeChangeSummary(rate=r, ks_statistic=statistic, pvalue=pvalue, n_samples=n_samples,
                             censored=int(n_samples - left.sum()), log_horizon=log_horizon,
                             exit_causes=causes, samples=samples)
