# cycle_queue/specials.py
"""
Special functions and shared numerics:
 - Poisson probabilities and Poisson tail ratios (log space, certified truncation)
 - harmonic numbers, Kummer's confluent hypergeometric M, exponential integral E1
 - adaptive quadrature with certified exponential tails, bracketed root finding

Everything here is a pure function of its arguments.
"""

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy import integrate as sp_integrate
from scipy import optimize, special

from .utils import BracketError, DomainError, NumericError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
DEFAULT_ABS_TOL = 1e-10
DEFAULT_REL_TOL = 1e-8
DEFAULT_ROOT_TOL = 1e-10
DEFAULT_MAX_DEPTH = 400
KUMMER_MAX_TERMS = 10_000
KUMMER_SMALL_RUN = 3  # consecutive negligible terms before the series stops
LOG_SPACE_FROM = 20


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = DEFAULT_ABS_TOL
    rel_tol: float = DEFAULT_REL_TOL
    max_depth: int = DEFAULT_MAX_DEPTH

    def __post_init__(self):
        require(self.abs_tol > 0, f"abs_tol must be positive, got {self.abs_tol}")
        require(self.rel_tol > 0, f"rel_tol must be positive, got {self.rel_tol}")
        require(self.max_depth >= 1, f"max_depth must be >= 1, got {self.max_depth}")


@dataclass(frozen=True)
class RootSpec:
    lo: float
    hi: float
    tol: float = DEFAULT_ROOT_TOL

    def __post_init__(self):
        require(self.lo < self.hi, f"bracket must satisfy lo < hi, got [{self.lo}, {self.hi}]")
        require(self.tol > 0, f"tol must be positive, got {self.tol}")


# --- Poisson / combinatorial helpers ---

def poisson_pmf(rho: float, c: int) -> float:
    """e^{-rho} rho^c / c!"""
    if rho <= 0:
        raise DomainError(f"Poisson mean must be positive, got {rho}")
    if c < 0:
        return 0.0
    if c <= LOG_SPACE_FROM:
        return math.exp(-rho) * rho ** c / math.factorial(c)
    return math.exp(c * math.log(rho) - rho - special.gammaln(c + 1))


def harmonic(k: int) -> float:
    """k-th harmonic number h_k."""
    if k < 1:
        raise DomainError(f"harmonic number needs k >= 1, got {k}")
    return math.fsum(1.0 / i for i in range(1, k + 1))


def log_rising_factorial(x: float, n: int) -> float:
    """log of (x)_n = x (x+1) ... (x+n-1) for x > 0."""
    return float(special.gammaln(x + n) - special.gammaln(x))


def poisson_tail_series(rho: float, c: int, power: int = 0, rel_tol: float = 1e-12,
                        max_terms: int = 1_000_000) -> float:
    """
    Sum over j > c of (j - c)^power * pi_j / pi_c for pi = Poisson(rho).

    Written as sum_m m^power rho^m / ((c+1)...(c+m)); once the ratio of consecutive
    terms drops below one the remainder is bounded by a geometric series.
    """
    if rho <= 0:
        raise DomainError(f"Poisson mean must be positive, got {rho}")
    if c < 0:
        raise DomainError(f"level must be nonnegative, got {c}")
    term = 1.0
    total = 0.0
    for m in range(1, max_terms + 1):
        term *= rho / (c + m)
        weighted = term * m ** power
        total += weighted
        ratio = ((m + 1) / m) ** power * rho / (c + m + 1)
        if ratio < 1.0 and weighted * ratio / (1.0 - ratio) <= rel_tol * total:
            logger.debug(f"poisson_tail_series(rho={rho}, c={c}, power={power}) stopped after {m} terms")
            return total
    raise NumericError("Poisson tail series did not converge", estimate=total)


# --- Kummer's function ---

def kummer_m(a: float, b: float, z: float, rel_tol: float = 1e-15) -> float:
    """Kummer's confluent hypergeometric function M(a, b, z) by its power series."""
    if b <= 0 and float(b).is_integer():
        raise DomainError(f"M(a, b, z) is undefined for nonpositive integer b={b}")
    if z == 0:
        return 1.0
    if z < 0:
        # Kummer's transformation keeps the series free of cancellation
        return math.exp(z) * _kummer_series(b - a, b, -z, rel_tol)
    return _kummer_series(a, b, z, rel_tol)


def _kummer_series(a: float, b: float, z: float, rel_tol: float) -> float:
    term = 1.0
    total = 1.0
    small_run = 0
    for i in range(KUMMER_MAX_TERMS):
        ratio = (a + i) * z / ((b + i) * (i + 1))
        term *= ratio
        total += term
        if term == 0.0:
            return total
        # only trust a small term once the terms have started to shrink
        if abs(term) <= rel_tol * abs(total) and abs((a + i + 1) * z / ((b + i + 1) * (i + 2))) < 1.0:
            small_run += 1
            if small_run >= KUMMER_SMALL_RUN:
                return total
        else:
            small_run = 0
    raise NumericError(f"Kummer series for M({a}, {b}, {z}) did not converge in {KUMMER_MAX_TERMS} terms",
                       estimate=total, error_bound=abs(term))


def exp_integral_e1(x: float) -> float:
    """E1(x) = int_x^inf e^{-s}/s ds."""
    if x <= 0:
        raise DomainError(f"E1 diverges for x <= 0, got {x}")
    return float(special.exp1(x))


# --- Quadrature ---

def integrate(f: Callable[[float], float], a: float, b: float, spec: QuadratureSpec = QuadratureSpec(),
              tail_rate: Optional[float] = None, tail_scale: float = 1.0,
              endpoint_exponents: Optional[Tuple[float, float]] = None) -> float:
    """
    Adaptive quadrature of f over [a, b].

    For b = +inf the caller certifies |f(t)| <= tail_scale * exp(-tail_rate * t) past the
    truncation point; the integral is cut where that tail is below abs_tol / 2.
    endpoint_exponents=(p, q) integrates f(u) (u-a)^p (b-u)^q for endpoint singularities.
    """
    abs_tol = spec.abs_tol
    upper = b
    if math.isinf(b):
        if tail_rate is None or tail_rate <= 0:
            raise DomainError("an improper integral needs a positive tail_rate")
        abs_tol = spec.abs_tol / 2
        cut = math.log(2.0 * tail_scale / (tail_rate * spec.abs_tol)) / tail_rate
        upper = max(cut, a + 1.0)
        logger.debug(f"improper integral truncated at T={upper:.3f} (rate {tail_rate})")

    kwargs = dict(epsabs=abs_tol, epsrel=spec.rel_tol, limit=spec.max_depth, full_output=1)
    if endpoint_exponents is not None:
        kwargs.update(weight="alg", wvar=endpoint_exponents)
    result = sp_integrate.quad(f, a, upper, **kwargs)
    value, error = float(result[0]), float(result[1])
    target = max(spec.abs_tol, spec.rel_tol * abs(value))
    if len(result) > 3 and error > target:
        raise NumericError(f"quadrature over [{a}, {upper}] missed tolerance: {result[3]}",
                           estimate=value, error_bound=error)
    return value


# --- Root finding ---

def find_root(f: Callable[[float], float], spec: RootSpec) -> float:
    """Bracketed root of f inside [spec.lo, spec.hi] (Brent's method)."""
    f_lo, f_hi = f(spec.lo), f(spec.hi)
    if f_lo == 0:
        return spec.lo
    if f_hi == 0:
        return spec.hi
    if np.sign(f_lo) == np.sign(f_hi):
        raise BracketError(f"no sign change over [{spec.lo}, {spec.hi}]: f={f_lo:.3g}, {f_hi:.3g}")
    try:
        root = optimize.brentq(f, spec.lo, spec.hi, xtol=spec.tol, rtol=4 * np.finfo(float).eps, maxiter=500)
    except RuntimeError as e:
        raise NumericError(f"root finding failed: {e}") from e
    logger.debug(f"root {root:.12g} in [{spec.lo}, {spec.hi}]")
    return float(root)


def scan_for_bracket(f: Callable[[float], float], lo: float, hi: float, step: float) -> Tuple[float, float]:
    """First grid cell [x, x+step] inside (lo, hi) where f changes sign."""
    x = lo
    f_x = f(x)
    while x + step <= hi + 1e-12:
        x_next = min(x + step, hi)
        f_next = f(x_next)
        if f_x == 0 or np.sign(f_x) != np.sign(f_next):
            logger.debug(f"sign change bracketed in [{x:.4f}, {x_next:.4f}]")
            return x, x_next
        x, f_x = x_next, f_next
    raise BracketError(f"no sign change found scanning [{lo}, {hi}] with step {step}")
