# cycle_queue/mminf.py
"""
Excursions of the M/M/infinity queue above a level c.

Arrivals at rate theta, each task served at rate mu, rho = theta/mu. Covers the
transient law, the renewal means of duration/area/arrivals, the Kummer-function
Laplace transforms, the busy-period moments, the leading root governing the
duration tail, and an exact excursion simulator.
"""

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy import special

from .specials import (QuadratureSpec, RootSpec, find_root, integrate, kummer_m, poisson_pmf,
                       poisson_tail_series, scan_for_bracket)
from .utils import DomainError, NumericError, SimulationCapError, require
from .walk import WalkParams, var_excursion_length

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
DEFAULT_STEP_CAP = 10 ** 9
ROOT_SCAN_STEP = 0.05
I_INTEGRAL_AGREEMENT = 1e-8
MOMENT_AGREEMENT = 1e-9
SERIES_REL_TOL = 1e-15


class RateConvention(str, Enum):
    STANDARD = "standard"    # mean rho (1 - e^{-mu t})
    DISPLAYED = "displayed"  # mean rho (1 - e^{-t/mu})


class LtConvention(str, Enum):
    Z_OVER_MU = "z_over_mu"  # I_c(z/mu, rho); matches the renewal mean at z = 0
    MU_Z = "mu_z"


@dataclass(frozen=True)
class QueueParams:
    theta: float
    mu: float = 1.0

    def __post_init__(self):
        require(self.theta > 0, f"theta must be positive, got {self.theta}")
        require(self.mu > 0, f"mu must be positive, got {self.mu}")

    @property
    def rho(self) -> float:
        return self.theta / self.mu

    @property
    def walk(self) -> WalkParams:
        return WalkParams(self.rho)


@dataclass(frozen=True)
class QueueExcursion:
    duration: float
    height: int
    area: float
    arrivals: int
    steps: int = 0

    def __post_init__(self):
        if self.duration <= 0 or self.area < 0 or self.height < 1:
            raise DomainError(f"inconsistent excursion {self}")


@dataclass(frozen=True)
class QueueExcursionBatch:
    duration: np.ndarray
    height: np.ndarray
    area: np.ndarray
    arrivals: np.ndarray
    steps: np.ndarray

    def __len__(self) -> int:
        return int(self.duration.size)


# --- Transient law ---

def transient_pmf(params: QueueParams, t: float, c: int,
                  convention: RateConvention = RateConvention.STANDARD) -> float:
    """P[X(t) = c] from an empty start: Poisson with a time-dependent mean."""
    require(t >= 0, f"t must be nonnegative, got {t}")
    rate = params.mu if RateConvention(convention) is RateConvention.STANDARD else 1.0 / params.mu
    mean = params.rho * -math.expm1(-rate * t)
    if mean == 0.0:
        return 1.0 if c == 0 else 0.0
    return poisson_pmf(mean, c)


def transient_lt(params: QueueParams, c: int, z: float,
                 convention: RateConvention = RateConvention.STANDARD) -> float:
    """int_0^inf pi_c(t) e^{-zt} dt, via the substitution u = 1 - e^{-mu t} (or e^{-t/mu})."""
    require(z > 0, f"z must be positive, got {z}")
    scale = params.mu if RateConvention(convention) is RateConvention.STANDARD else 1.0 / params.mu
    rho = params.rho
    prefactor = math.exp(c * math.log(rho) - special.gammaln(c + 1)) / scale
    return prefactor * i_integral_kummer(c, z / scale, rho)


# --- Renewal means ---

def mean_duration(params: QueueParams, c: int) -> float:
    """E[D_c] = sum_{j>c} pi_j / (theta pi_c)."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    return poisson_tail_series(params.rho, c, rel_tol=SERIES_REL_TOL) / params.theta


def mean_arrivals(params: QueueParams, c: int) -> float:
    """E[Delta_c] = sum_{j>c} pi_j / pi_c."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    return poisson_tail_series(params.rho, c, rel_tol=SERIES_REL_TOL)


def mean_area(params: QueueParams, c: int) -> float:
    """E[A_c] = sum_j pi_j (j-c) / (theta pi_c)."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    return poisson_tail_series(params.rho, c, power=1, rel_tol=SERIES_REL_TOL) / params.theta


def first_passage_mean_sum(params: QueueParams, c: int) -> float:
    """Mean first-passage time from 0 up to c+1: sum_{j<=c} E[D_j]."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    return math.fsum(mean_duration(params, j) for j in range(c + 1))


# --- I_c integrals and Laplace transforms ---

def i_integral_kummer(c: int, alpha: float, beta: float) -> float:
    """I_c(alpha, beta) = e^{-beta} B(c+1, alpha) M(alpha, alpha+c+1, beta)."""
    if alpha <= 0:
        raise DomainError(f"I_c(alpha, beta) needs alpha > 0, got {alpha}")
    log_beta_fn = special.gammaln(c + 1) + special.gammaln(alpha) - special.gammaln(c + alpha + 1)
    return math.exp(log_beta_fn - beta) * kummer_m(alpha, alpha + c + 1, beta)


def i_integral(c: int, alpha: float, beta: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """I_c(alpha, beta) = int_0^1 u^c (1-u)^{alpha-1} e^{-beta u} du, by quadrature."""
    if alpha <= 0:
        raise DomainError(f"I_c(alpha, beta) needs alpha > 0, got {alpha}")
    value = integrate(lambda u: math.exp(-beta * u), 0.0, 1.0, spec, endpoint_exponents=(float(c), alpha - 1.0))
    closed = i_integral_kummer(c, alpha, beta)
    if abs(value - closed) > I_INTEGRAL_AGREEMENT * max(1.0, abs(closed)):
        logger.warning(f"I_{c}({alpha}, {beta}): quadrature {value:.12g} vs Kummer {closed:.12g}")
    return value


def kummer_ratio(c: int, alpha: float, beta: float) -> float:
    """I_{c+1}(alpha, beta) / I_c(alpha, beta), analytic down to alpha = 0 where it equals 1."""
    if alpha < 0:
        raise DomainError(f"ratio needs alpha >= 0, got {alpha}")
    if alpha == 0:
        return 1.0
    return ((c + 1) / (c + alpha + 1)) * kummer_m(alpha, alpha + c + 2, beta) / kummer_m(alpha, alpha + c + 1, beta)


def duration_lt(params: QueueParams, c: int, z: float, convention: LtConvention = LtConvention.Z_OVER_MU) -> float:
    """E[exp(-z D_c)] = I_{c+1}(z/mu, rho) / I_c(z/mu, rho)."""
    require(z >= 0, f"z must be nonnegative, got {z}")
    alpha = z / params.mu if LtConvention(convention) is LtConvention.Z_OVER_MU else params.mu * z
    return kummer_ratio(c, alpha, params.rho)


def joint_lt(params: QueueParams, c: int, x: float, y: float, z: float) -> float:
    """
    E[exp(-x D_c - y Delta_c - z A_c)]
    = mu/(z+mu) * I_{c+1}(a-b, b) / I_c(a-b, b), a = (x+theta)/(z+mu), b = theta mu e^{-y}/(z+mu)^2.
    """
    require(min(x, y, z) >= 0, f"x, y, z must be nonnegative, got {(x, y, z)}")
    theta, mu = params.theta, params.mu
    a = (x + theta) / (z + mu)
    b = theta * mu * math.exp(-y) / (z + mu) ** 2
    gap = a - b
    if gap < 0:
        if gap > -1e-14 * a:
            gap = 0.0
        else:
            raise DomainError(f"joint transform undefined at a - b = {gap:.3g} < 0")
    return mu / (z + mu) * kummer_ratio(c, gap, b)


# --- Busy-period moments ---

def _busy_series(rho: float):
    """S1 = sum_{j>=1} rho^j/(j j!), S2 = sum_{j>=1} rho^j/(j^2 j!)."""
    term = 1.0
    s1 = s2 = 0.0
    for j in range(1, 100_000):
        term *= rho / j
        s1 += term / j
        s2 += term / j ** 2
        if j > rho and term / j <= SERIES_REL_TOL * s1:
            return s1, s2
    raise NumericError("busy-period moment series did not converge", estimate=s1)


def duration_second_moment(params: QueueParams, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """E[D_0^2] = 2 e^{2 rho}/(theta mu) sum_{j>=1} pi_j / j, checked against the integral form."""
    rho = params.rho
    s1, _ = _busy_series(rho)
    series = 2.0 * math.exp(rho) / (params.theta * params.mu) * s1
    ein = integrate(lambda s: math.expm1(s) / s if s > 0 else 1.0, 0.0, rho, spec)
    integral = 2.0 * math.exp(rho) / (params.theta * params.mu) * ein
    if abs(series - integral) > MOMENT_AGREEMENT * series:
        raise NumericError(f"second moment routes disagree: series {series!r}, integral {integral!r}",
                           estimate=series, error_bound=abs(series - integral))
    return series


def duration_variance(params: QueueParams) -> float:
    return duration_second_moment(params) - mean_duration(params, 0) ** 2


def duration_third_moment(params: QueueParams) -> float:
    """E[D_0^3] = 6 e^rho/(theta mu^2) [e^{2 rho}(sum pi_j/j)^2 + e^rho sum pi_j/j^2]."""
    s1, s2 = _busy_series(params.rho)
    return 6.0 * math.exp(params.rho) / (params.theta * params.mu ** 2) * (s1 ** 2 + s2)


def arrivals_variance(params: QueueParams) -> float:
    """Var[Delta_0] = Var[kappa_0]/4: arrivals are the up-moves of the embedded walk."""
    return var_excursion_length(params.walk) / 4.0


def duration_arrivals_covariance(params: QueueParams) -> float:
    """Cov(D_0, Delta_0) from E[Delta - theta D] = 0 and E[(Delta - theta D)^2] = E[Delta]."""
    theta = params.theta
    return (arrivals_variance(params) + theta ** 2 * duration_variance(params) - mean_arrivals(params, 0)) / (2 * theta)


# --- Tail root ---

def leading_root(params: QueueParams, c: int) -> float:
    """Smallest positive root of z -> M(-z, c+1-z, rho), scanned below the pole at c+1."""
    require(c >= 0, f"level must be nonnegative, got {c}")
    rho = params.rho

    def f(z: float) -> float:
        return kummer_m(-z, c + 1 - z, rho)

    upper = c + 1 - ROOT_SCAN_STEP / 10
    lo, hi = scan_for_bracket(f, 0.0, upper, ROOT_SCAN_STEP)
    root = find_root(f, RootSpec(lo, hi))
    logger.info(f"leading root for c={c}, rho={rho:g}: {root:.6f} (bracket [{lo:.2f}, {hi:.2f}])")
    return root


def tail_decay_rate(params: QueueParams, c: int) -> float:
    """Exponential decay rate of P[D_c > t] (leading root in units of mu)."""
    return params.mu * leading_root(params, c)


# --- Simulation ---

def simulate_queue_excursion(params: QueueParams, c: int, rng: np.random.Generator,
                             max_steps: int = DEFAULT_STEP_CAP) -> QueueExcursion:
    """Start at c+1, run until the first passage to c."""
    theta, mu = params.theta, params.mu
    state = c + 1
    duration = area = 0.0
    top = state
    arrivals = steps = 0
    while state > c:
        if steps >= max_steps:
            raise SimulationCapError(f"excursion above {c} exceeded {max_steps} steps")
        rate = theta + mu * state
        dt = rng.exponential(1.0 / rate)
        duration += dt
        area += (state - c) * dt
        steps += 1
        if rng.random() * rate < theta:
            state += 1
            arrivals += 1
            top = max(top, state)
        else:
            state -= 1
    return QueueExcursion(duration=duration, height=top - c, area=area, arrivals=arrivals, steps=steps)


def simulate_queue_excursions(params: QueueParams, c: int, n: int, rng: np.random.Generator,
                              max_steps: int = DEFAULT_STEP_CAP) -> QueueExcursionBatch:
    """`n` independent excursions above c, advanced together."""
    theta, mu = params.theta, params.mu
    state = np.full(n, c + 1, dtype=np.int64)
    duration = np.zeros(n)
    area = np.zeros(n)
    top = state.copy()
    arrivals = np.zeros(n, dtype=np.int64)
    steps = np.zeros(n, dtype=np.int64)
    active = np.arange(n)
    rounds = 0
    while active.size:
        if rounds >= max_steps:
            raise SimulationCapError(f"{active.size} excursions above {c} still running after {max_steps} steps")
        s = state[active]
        rate = theta + mu * s
        dt = rng.exponential(1.0, active.size) / rate
        duration[active] += dt
        area[active] += (s - c) * dt
        up = rng.random(active.size) * rate < theta
        s = s + np.where(up, 1, -1)
        state[active] = s
        arrivals[active] += up
        steps[active] += 1
        top[active] = np.maximum(top[active], s)
        active = active[s > c]
        rounds += 1
    return QueueExcursionBatch(duration=duration, height=top - c, area=area, arrivals=arrivals, steps=steps)
