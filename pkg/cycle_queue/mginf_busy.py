# cycle_queue/mginf_busy.py
"""
Busy periods of Y(t) = C_1(t) + ... + C_k(t), an M/G/infinity queue.

Each cycle passes through sizes 1..k, so its service time sigma = sum_i xi_i / i has
P[sigma <= t] = (1 - e^{-t})^k, mean h_k, and rho = theta h_k. With y = 1 - e^{-t}:

    int_0^t P[sigma > x] dx = sum_{i=1}^k y^i / i
    pi_0(t) = P[Y(t) = 0] = exp(-theta sum_i y^i / i)

Everything below (Takacs transform, moments, tail exponent) is built on these two
closed forms; pi_0' is never differentiated numerically.
"""

import heapq
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np

from .mminf import QueueExcursion, QueueExcursionBatch
from .specials import QuadratureSpec, RootSpec, find_root, harmonic, integrate, scan_for_bracket
from .utils import DomainError, NumericError, SimulationCapError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
BETA_SCAN_STEP = 0.01
BETA_SCAN_UPPER = 0.99
DSTAR_AGREEMENT = 1e-8
ALPHA_STAR_AGREEMENT = 1e-6
INVERSE_GRID_POINTS = 1 << 16
INVERSE_TAIL = 1e-13
DEFAULT_EVENT_CAP = 10_000_000
SLOPE_LOWER_QUANTILE = 0.95
SLOPE_MIN_EXCEEDANCES = 500
SLOPE_POINTS = 12


@dataclass(frozen=True)
class MgParams:
    theta: float
    k: int = 1

    def __post_init__(self):
        require(self.theta > 0, f"theta must be positive, got {self.theta}")
        require(self.k >= 1, f"k must be at least 1, got {self.k}")

    @property
    def rho(self) -> float:
        return self.theta * harmonic(self.k)


@dataclass(frozen=True)
class TailAsymptotics:
    """1 - F(t) ~ alpha e^{-beta t} for the busy period, f*(t) ~ alpha_star e^{-beta t} for D_0*."""
    beta: float
    alpha: float
    alpha_star: float
    renewal_mass: float = 1.0  # int e^{beta t} (-pi_0'(t)) dt, 1 at the exact root


# --- Service and residual laws ---

def _check_time(t: float) -> None:
    require(t >= 0, f"t must be nonnegative, got {t}")


def service_cdf(k: int, t: float) -> float:
    """(1 - e^{-t})^k"""
    _check_time(t)
    return (-math.expm1(-t)) ** k


def service_tail(k: int, t: float) -> float:
    """1 - (1 - e^{-t})^k without cancellation; ~ k e^{-t} for large t."""
    _check_time(t)
    if t == 0:
        return 1.0
    return -math.expm1(k * math.log1p(-math.exp(-t)))


def _power_sums(k: int, t: float) -> Tuple[float, float]:
    """(sum_i y^i/i, sum_i (1 - y^i)/i) with y = 1 - e^{-t}."""
    if t == 0:
        return 0.0, harmonic(k)
    log_y = math.log1p(-math.exp(-t))
    head = math.fsum(math.exp(i * log_y) / i for i in range(1, k + 1))
    tail = math.fsum(-math.expm1(i * log_y) / i for i in range(1, k + 1))
    return head, tail


def residual_cdf(k: int, t: float) -> float:
    """P[sigma* <= t] = (1/h_k) int_0^t P[sigma > x] dx."""
    _check_time(t)
    return _power_sums(k, t)[0] / harmonic(k)


def residual_tail(k: int, t: float) -> float:
    _check_time(t)
    return _power_sums(k, t)[1] / harmonic(k)


def residual_density(k: int, t: float) -> float:
    return service_tail(k, t) / harmonic(k)


# --- Empty-system probability ---

def pi0_of_t(params: MgParams, t: float) -> float:
    """pi_0(t) = exp(-rho P[sigma* <= t])."""
    _check_time(t)
    return math.exp(-params.theta * _power_sums(params.k, t)[0])


def pi0_derivative(params: MgParams, t: float) -> float:
    """pi_0'(t) = -theta P[sigma > t] pi_0(t)."""
    return -params.theta * service_tail(params.k, t) * pi0_of_t(params, t)


def pi0_excess(params: MgParams, t: float) -> float:
    """pi_0(t) - e^{-rho}, computed without cancellation."""
    _check_time(t)
    return math.exp(-params.rho) * math.expm1(params.theta * _power_sums(params.k, t)[1])


# --- Transforms ---

def l_function(params: MgParams, z: float, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """
    L(z) = 1 + int_0^inf e^{-zt} pi_0'(t) dt, z > -1.

    With y = 1 - e^{-t} this is 1 - theta int_0^1 (1-y)^z q(y) e^{-theta p(y)} dy, where
    q(y) = sum_{i<k} y^i and p(y) = sum_{i<=k} y^i/i; the (1-y)^z factor goes into the
    quadrature weight, which stays exact for every z > -1.
    """
    if z <= -1:
        raise DomainError(f"L(z) is defined for z > -1, got {z}")
    theta, k = params.theta, params.k
    q_coef = np.ones(k)
    p_coef = np.concatenate(([0.0], 1.0 / np.arange(1, k + 1)))

    def integrand(y: float) -> float:
        q = np.polynomial.polynomial.polyval(y, q_coef)
        p = np.polynomial.polynomial.polyval(y, p_coef)
        return q * math.exp(-theta * p)

    return 1.0 - theta * integrate(integrand, 0.0, 1.0, spec, endpoint_exponents=(0.0, float(z)))


def takacs_duration_lt(params: MgParams, z: float) -> float:
    """E[exp(-z D_0)] = 1 + z/theta - z/(theta L(z))."""
    require(z > 0, f"z must be positive, got {z}")
    theta = params.theta
    return 1.0 + z / theta - z / (theta * l_function(params, z))


def integrated_tail_lt(params: MgParams, z: float) -> float:
    """(1 - E[exp(-z D_0)]) / (z E[D_0]): transform of the stationary residual busy period."""
    require(z > 0, f"z must be positive, got {z}")
    return (1.0 - takacs_duration_lt(params, z)) / (z * busy_mean(params))


def dstar_lt(params: MgParams, z: float) -> float:
    """E[exp(-z D_0*)] = (1/L(z) - 1) / (e^rho - 1)."""
    require(z > 0, f"z must be positive, got {z}")
    value = (1.0 / l_function(params, z) - 1.0) / math.expm1(params.rho)
    other = integrated_tail_lt(params, z)
    if abs(value - other) > DSTAR_AGREEMENT:
        logger.warning(f"D0* transform routes disagree at z={z}: {value:.12g} vs {other:.12g}")
    return value


# --- Moments ---

def busy_mean(params: MgParams) -> float:
    """E[D_0] = (e^rho - 1)/theta."""
    return math.expm1(params.rho) / params.theta


def _excess_bound(params: MgParams) -> float:
    # pi_0(t) - e^{-rho} <= e^{-rho} theta k e^{theta k} e^{-t}
    tk = params.theta * params.k
    return math.exp(-params.rho) * tk * math.exp(tk)


def busy_second_moment(params: MgParams, spec: QuadratureSpec = QuadratureSpec()) -> float:
    """E[D_0^2] = 2/(theta pi_0^2) int_0^inf (pi_0(t) - pi_0) dt."""
    area = integrate(lambda t: pi0_excess(params, t), 0.0, math.inf, spec,
                     tail_rate=1.0, tail_scale=_excess_bound(params))
    return 2.0 * math.exp(2.0 * params.rho) / params.theta * area


def busy_variance(params: MgParams) -> float:
    return busy_second_moment(params) - busy_mean(params) ** 2


def renewal_integrals(params: MgParams, beta: float, spec: QuadratureSpec = QuadratureSpec()) -> Tuple[float, float]:
    """
    (int e^{beta t} (-pi_0'(t)) dt, int t e^{beta t} (-pi_0'(t)) dt) for 0 <= beta < 1.

    The first equals 1 - L(-beta) but is integrated over t, not through the y-substitution
    used by l_function, so it checks the solved beta independently.
    """
    require(0 <= beta < 1, f"beta must lie in [0, 1), got {beta}")
    theta, k = params.theta, params.k
    # |e^{beta t} pi_0'(t)| <= theta k e^{-(1-beta) t}
    mass = integrate(lambda t: -math.exp(beta * t) * pi0_derivative(params, t), 0.0, math.inf, spec,
                     tail_rate=1.0 - beta, tail_scale=theta * k)
    # |t e^{beta t} pi_0'(t)| <= theta k 2/(e (1-beta)) e^{-(1-beta) t / 2}
    decay = (1.0 - beta) / 2.0
    scale = theta * k * 2.0 / (math.e * (1.0 - beta))
    moment = integrate(lambda t: -t * math.exp(beta * t) * pi0_derivative(params, t), 0.0, math.inf, spec,
                       tail_rate=decay, tail_scale=scale)
    return mass, moment


def tail_asymptotics(params: MgParams, spec: QuadratureSpec = QuadratureSpec()) -> TailAsymptotics:
    """
    beta: the root of L(-beta) = 0 in (0, 1); alpha = 1/(theta J) with
    J = int_0^inf t e^{beta t} (-pi_0'(t)) dt.

    alpha_star comes from the renewal equation for the density of D_0*, whose defective
    kernel is (1 - pi_0) u(t) with u = -pi_0'/(1 - pi_0):
        alpha_star = pi_0 int e^{beta x} u(x) dx / ((1 - pi_0) int x e^{beta x} u(x) dx)
    and agrees with alpha theta/(e^rho - 1) only when int e^{beta x} (-pi_0'(x)) dx = 1.
    """
    def l_at(b: float) -> float:
        return l_function(params, -b, spec)

    try:
        lo, hi = scan_for_bracket(l_at, 0.0, BETA_SCAN_UPPER, BETA_SCAN_STEP)
    except NumericError as e:
        raise NumericError(f"L(-beta) keeps its sign on (0, {BETA_SCAN_UPPER}]: {e}") from e
    beta = find_root(l_at, RootSpec(lo, hi))
    logger.info(f"tail exponent beta={beta:.6f} bracketed in [{lo:.2f}, {hi:.2f}]")

    mass, moment = renewal_integrals(params, beta, spec)
    alpha = 1.0 / (params.theta * moment)
    pi0 = math.exp(-params.rho)
    u_mass = mass / (1.0 - pi0)
    u_moment = moment / (1.0 - pi0)
    alpha_star = pi0 * u_mass / ((1.0 - pi0) * u_moment)
    expected = alpha * params.theta / math.expm1(params.rho)
    if abs(alpha_star - expected) > ALPHA_STAR_AGREEMENT * expected:
        logger.warning(f"alpha* = {alpha_star:.12g} differs from alpha theta/(e^rho - 1) = {expected:.12g} "
                       f"(renewal mass {mass:.12g})")
    return TailAsymptotics(beta=beta, alpha=alpha, alpha_star=alpha_star, renewal_mass=mass)


def empirical_tail_slope(durations: np.ndarray, lower_quantile: float = SLOPE_LOWER_QUANTILE,
                         min_exceedances: int = SLOPE_MIN_EXCEEDANCES, n_points: int = SLOPE_POINTS) -> float:
    """
    Least-squares slope of log P[D > t] over [q, t_hi]: q the lower_quantile of the sample,
    t_hi the point still exceeded by min_exceedances draws. Tends to -beta.
    """
    x = np.sort(np.asarray(durations, dtype=float))
    if x.size < min_exceedances / (1.0 - lower_quantile) + 1:
        raise DomainError(f"{x.size} durations leave fewer than {min_exceedances} beyond the fit window")
    lo = float(np.quantile(x, lower_quantile))
    hi = float(x[-min_exceedances])
    if hi <= lo:
        raise DomainError(f"tail fit window [{lo:.3g}, {hi:.3g}] is empty")
    grid = np.linspace(lo, hi, n_points)
    survival = (x.size - np.searchsorted(x, grid, side="right")) / x.size
    slope = float(np.polyfit(grid, np.log(survival), 1)[0])
    logger.debug(f"tail slope {slope:.5f} over [{lo:.3f}, {hi:.3f}] from {x.size} durations")
    return slope


# --- Sampling ---

@lru_cache(maxsize=32)
def _residual_inverse_table(theta: float, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Grid of (cdf, t) for the density -pi_0'(t)/(1 - pi_0), cdf (1 - pi_0(t))/(1 - pi_0)."""
    params = MgParams(theta, k)
    pi0 = math.exp(-params.rho)
    t_max = math.log(_excess_bound(params) / ((1.0 - pi0) * INVERSE_TAIL))
    grid = np.linspace(0.0, t_max, INVERSE_GRID_POINTS)
    cdf = np.array([-math.expm1(-theta * _power_sums(k, t)[0]) for t in grid]) / (1.0 - pi0)
    cdf[-1] = 1.0
    logger.debug(f"inverse table for theta={theta}, k={k}: {grid.size} points up to t={t_max:.2f}")
    return cdf, grid


def sample_dstar_geometric(params: MgParams, rng: np.random.Generator, size: int = 1) -> np.ndarray:
    """
    D_0* as a geometric sum: Q ~ Geometric(pi_0) on {1, 2, ...} summands with density
    -pi_0'(t)/(1 - pi_0), drawn by inverting a tabulated CDF.
    """
    cdf, grid = _residual_inverse_table(float(params.theta), int(params.k))
    counts = rng.geometric(math.exp(-params.rho), size=size)
    draws = np.interp(rng.random(int(counts.sum())), cdf, grid)
    owner = np.repeat(np.arange(size), counts)
    return np.bincount(owner, weights=draws, minlength=size)


def _service_times(k: int, rng: np.random.Generator, size) -> np.ndarray:
    """max of k unit exponentials has CDF (1 - e^{-t})^k."""
    return rng.exponential(1.0, size=(*np.atleast_1d(size), k)).max(axis=-1)


def simulate_busy_period(params: MgParams, rng: np.random.Generator,
                         max_events: int = DEFAULT_EVENT_CAP) -> QueueExcursion:
    """One busy period started by an arrival into an empty system."""
    theta, k = params.theta, params.k
    t = 0.0
    initiator = float(_service_times(k, rng, 1)[0])
    in_service = [initiator]
    occupancy = top = 1
    area = 0.0
    arrivals = steps = 0
    next_arrival = rng.exponential(1.0 / theta)
    while occupancy:
        if steps >= max_events:
            raise SimulationCapError(f"busy period exceeded {max_events} events")
        steps += 1
        if next_arrival < in_service[0]:
            area += occupancy * (next_arrival - t)
            t = next_arrival
            heapq.heappush(in_service, t + float(_service_times(k, rng, 1)[0]))
            occupancy += 1
            arrivals += 1
            top = max(top, occupancy)
            next_arrival = t + rng.exponential(1.0 / theta)
        else:
            finish = heapq.heappop(in_service)
            area += occupancy * (finish - t)
            t = finish
            occupancy -= 1
    return QueueExcursion(duration=t, height=top, area=area, arrivals=arrivals, steps=steps)


def simulate_busy_periods(params: MgParams, n: int, rng: np.random.Generator) -> QueueExcursionBatch:
    runs = [simulate_busy_period(params, rng) for _ in range(n)]
    return QueueExcursionBatch(duration=np.array([r.duration for r in runs]),
                               height=np.array([r.height for r in runs], dtype=np.int64),
                               area=np.array([r.area for r in runs]),
                               arrivals=np.array([r.arrivals for r in runs], dtype=np.int64),
                               steps=np.array([r.steps for r in runs], dtype=np.int64))


def occupancy_at(params: MgParams, t: float, size: int, rng: np.random.Generator) -> np.ndarray:
    """Y(t) from an empty start for `size` paths: arrivals still in service at time t."""
    require(t > 0, f"t must be positive, got {t}")
    arrivals = rng.poisson(params.theta * t, size=size)
    owner = np.repeat(np.arange(size), arrivals)
    entry = rng.random(owner.size) * t
    present = _service_times(params.k, rng, owner.size) > t - entry
    return np.bincount(owner[present], minlength=size)
