# cycle_queue/walk.py
"""
The nearest-neighbour walk on {0, 1, 2, ...} with up-probability rho/(c+rho).

It is the embedded jump chain of the singleton count (rho = theta) and of the
M/M/infinity queue (rho = theta/mu). Exact stationary law, excursion statistics,
gambler's ruin, the asymptotic maximum index and excursion simulators.
"""

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import special

from .specials import poisson_pmf, poisson_tail_series
from .utils import DomainError, NumericError, SimulationCapError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
DEFAULT_STEP_CAP = 10 ** 9
SERIES_REL_TOL = 1e-12
SERIES_MAX_TERMS = 100_000


@dataclass(frozen=True)
class WalkParams:
    rho: float

    def __post_init__(self):
        require(self.rho > 0, f"rho must be positive, got {self.rho}")


@dataclass(frozen=True)
class WalkExcursion:
    length: int
    height: int
    upmoves: int

    def __post_init__(self):
        if self.length != 2 * self.upmoves + 1 or self.height < 1:
            raise DomainError(f"inconsistent excursion {self}")


@dataclass(frozen=True)
class WalkExcursionBatch:
    length: np.ndarray
    height: np.ndarray
    upmoves: np.ndarray

    def __len__(self) -> int:
        return int(self.length.size)


# --- Exact laws ---

def step_probs(params: WalkParams, c: int) -> Tuple[float, float]:
    require(c >= 0, f"state must be nonnegative, got {c}")
    p = params.rho / (c + params.rho)
    return p, 1.0 - p


def stationary_pmf(params: WalkParams, c: int) -> float:
    """alpha_c = e^{-rho}(rho+c)rho^{c-1}/(2 c!): equal mixture of Poisson(rho) and its shift by one."""
    if c < 0:
        return 0.0
    shifted = poisson_pmf(params.rho, c - 1) if c >= 1 else 0.0
    return 0.5 * (poisson_pmf(params.rho, c) + shifted)


def mean_excursion_length(params: WalkParams, c: int) -> float:
    """E[kappa_c] = 1 + 2 sum_{j>c} pi_j / pi_c."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    return 1.0 + 2.0 * poisson_tail_series(params.rho, c, rel_tol=SERIES_REL_TOL)


def var_excursion_length(params: WalkParams) -> float:
    """Harris' formula for Var[kappa_0]."""
    rho = params.rho
    e_rho = math.exp(rho)
    head = 4.0 * e_rho * (2.0 * rho - e_rho + 1.0)
    # sum_r (1/pi_r)(sum_{j>r} pi_j)^2 = sum_r pi_r R_r^2 with R_r the tail ratio
    total = 0.0
    for r in range(SERIES_MAX_TERMS):
        tail_ratio = poisson_tail_series(rho, r, rel_tol=SERIES_REL_TOL)
        term = poisson_pmf(rho, r) * tail_ratio ** 2
        total += term
        q = rho / (r + 1)
        if r > rho and q < 1 and term * q / (1 - q) <= SERIES_REL_TOL * total:
            break
    else:
        raise NumericError("Harris series did not converge", estimate=total)
    return head + 8.0 * e_rho * total


def _log_inverse_pi(rho: float, r: np.ndarray) -> np.ndarray:
    return special.gammaln(r + 1) - r * math.log(rho) + rho


def ruin_probability(params: WalkParams, ell: int, s: int, u: int) -> float:
    """P[walk started at s hits u before ell] via the scale function sum 1/pi_r."""
    if not 0 <= ell < s <= u:
        raise DomainError(f"need 0 <= ell < s <= u, got ell={ell}, s={s}, u={u}")
    if s == u:
        return 1.0
    num = special.logsumexp(_log_inverse_pi(params.rho, np.arange(ell, s, dtype=float)))
    den = special.logsumexp(_log_inverse_pi(params.rho, np.arange(ell, u, dtype=float)))
    return float(math.exp(num - den))


def height_tail(params: WalkParams, c: int, h: int) -> float:
    """P[H_c >= h+1] = 1 / sum_{r=0}^h (c+1)_r / rho^r."""
    require(c >= 0 and h >= 0, f"need c, h >= 0, got c={c}, h={h}")
    term = 1.0
    total = 1.0
    for r in range(1, h + 1):
        term *= (c + r) / params.rho
        total += term
        if total > 1e300:
            return 0.0
    return 1.0 / total


def height_moments(params: WalkParams) -> Tuple[float, float]:
    """Mean and variance of the excursion height above 0."""
    mean = 0.0
    second = 0.0
    for h in range(SERIES_MAX_TERMS):
        tail = height_tail(params, 0, h)
        mean += tail
        second += (2 * h + 1) * tail
        # tails shrink faster than any geometric once h > rho
        if h > params.rho and tail * (2 * h + 3) < 1e-17 * second:
            break
    return mean, second - mean ** 2


def park_index(m: int, params: WalkParams) -> int:
    """Asymptotic index of the maximum height over m excursions above 0."""
    if m < 3:
        raise DomainError(f"park index needs m >= 3, got {m}")
    log_m = math.log(m)
    loglog = math.log(log_m)
    denominator = loglog - 1.0 - math.log(params.rho)
    if denominator <= 0:
        raise DomainError(f"log log m = {loglog:.4f} has not passed 1 + log rho; asymptotic regime not reached")
    numerator = log_m - 0.5 * loglog - 0.5 * math.log(2 * math.pi)
    return int(math.floor(numerator / denominator + 0.5))


def max_height_cdf(params: WalkParams, m: int, h: int) -> float:
    """P[max height over m independent excursions above 0 <= h]."""
    require(m >= 1, f"m must be positive, got {m}")
    if h < 1:
        return 0.0
    return float(math.exp(m * math.log1p(-height_tail(params, 0, h))))


def park_window_probability(params: WalkParams, m: int, lo: int, hi: int) -> float:
    require(lo <= hi, f"empty window [{lo}, {hi}]")
    return max_height_cdf(params, m, hi) - max_height_cdf(params, m, lo - 1)


# --- Simulation ---

def simulate_excursion(params: WalkParams, c: int, rng: np.random.Generator,
                       max_steps: int = DEFAULT_STEP_CAP) -> WalkExcursion:
    """One excursion: start at c+1, stop at the first return to c."""
    state = c + 1
    length = upmoves = 0
    top = state
    while state > c:
        if length >= max_steps:
            raise SimulationCapError(f"excursion above {c} exceeded {max_steps} steps")
        length += 1
        if rng.random() < params.rho / (state + params.rho):
            state += 1
            upmoves += 1
            top = max(top, state)
        else:
            state -= 1
    return WalkExcursion(length=length, height=top - c, upmoves=upmoves)


def simulate_excursions(params: WalkParams, c: int, n: int, rng: np.random.Generator,
                        max_steps: int = DEFAULT_STEP_CAP) -> WalkExcursionBatch:
    """`n` independent excursions above c, advanced together."""
    state = np.full(n, c + 1, dtype=np.int64)
    length = np.zeros(n, dtype=np.int64)
    upmoves = np.zeros(n, dtype=np.int64)
    top = state.copy()
    active = np.arange(n)
    steps = 0
    while active.size:
        if steps >= max_steps:
            raise SimulationCapError(f"{active.size} excursions above {c} still running after {max_steps} steps")
        s = state[active]
        up = rng.random(active.size) < params.rho / (s + params.rho)
        s = s + np.where(up, 1, -1)
        state[active] = s
        length[active] += 1
        upmoves[active] += up
        top[active] = np.maximum(top[active], s)
        active = active[s > c]
        steps += 1
    return WalkExcursionBatch(length=length, height=top - c, upmoves=upmoves)


def simulate_walk_path(params: WalkParams, n_steps: int, rng: np.random.Generator, start: int = 0) -> np.ndarray:
    """States J_0..J_{n_steps} of one walk."""
    require(start >= 0, f"start must be nonnegative, got {start}")
    uniforms = rng.random(n_steps)
    path = np.empty(n_steps + 1, dtype=np.int64)
    state = start
    rho = params.rho
    path[0] = state
    for i in range(n_steps):
        state = state + 1 if uniforms[i] < rho / (state + rho) else state - 1
        path[i + 1] = state
    return path
