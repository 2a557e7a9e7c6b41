# cycle_queue/experiments.py
"""
Named quantities the command line can report, grouped by command.

Each quantity is either analytic (closed forms and quadrature only) or stochastic
(needs a seed; compares a Monte Carlo estimate against its analytic target).
"""

import logging
import math
import zlib
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, List, Optional, Sequence

import numpy as np
from scipy import stats

from . import crp_discrete as crp
from . import mginf_busy as busy
from . import mminf
from . import tagged as tg
from . import tandem_ct as tandem
from . import walk as wk
from .mc_harness import (GofResult, McEstimate, TestKind, batch_means, block_stream, chi_square_test, gof_test,
                         replicate, summarize, z_test)
from .utils import DomainError, require

logger = logging.getLogger(__name__)

# ---------------- Configuration ----------------
EXACT_TOL = 1e-10
PASCAL_TOL = 1e-8
TAGGED_BATCHES = 40
TAGGED_WARMUP = 50.0
PATH_BATCHES = 20
TIME_CHANGE_SAMPLES = 15_000
TIME_CHANGE_KS = 0.02
TIME_CHANGE_CASES = ((1, crp.CycleCounts()), (2, crp.CycleCounts()), (2, crp.CycleCounts.of(1, 0)))
MAX_CYCLE_TIME = 8.0
TAIL_SLOPE_REL = 0.10
# published four- and three-digit values are checked to their last digit
FOUR_DIGITS = 1e-4
THREE_DIGITS = 1e-3


class Kind(str, Enum):
    ANALYTIC = "analytic"
    STOCHASTIC = "stochastic"


@dataclass(frozen=True)
class ReportRow:
    quantity: str
    analytic: Optional[float] = None
    mc_mean: Optional[float] = None
    mc_stderr: Optional[float] = None
    target_ref: str = ""
    passed: Optional[bool] = None

    def __post_init__(self):
        if self.analytic is None and self.mc_mean is None:
            raise DomainError(f"row {self.quantity!r} carries neither an analytic value nor an estimate")

    def as_record(self) -> Dict[str, object]:
        def num(v):
            return None if v is None else float(v)

        return {"quantity": self.quantity, "analytic": num(self.analytic), "mc_mean": num(self.mc_mean),
                "mc_stderr": num(self.mc_stderr), "target_ref": self.target_ref,
                "pass": None if self.passed is None else bool(self.passed)}


@dataclass(frozen=True)
class Settings:
    theta: float = 1.0
    k: int = 2
    mu: float = 1.0
    rho: float = 1.0
    c: int = 0
    t: float = 1.0
    z: float = 1.0
    nu: int = 10_000
    n: int = 6
    m: int = 10_000
    n_reps: int = 100_000
    seed: Optional[int] = None
    checkpoints: Sequence[int] = (1000, 10_000)
    progress: bool = False

    def stream(self, name: str) -> int:
        return zlib.crc32(name.encode("utf-8"))


@dataclass(frozen=True)
class Quantity:
    name: str
    kind: Kind
    compute: Callable[[Settings], List[ReportRow]]
    note: str = ""


def exact_row(name: str, value: float, ref: str, target: Optional[float] = None, tol: float = EXACT_TOL) -> ReportRow:
    passed = None if target is None else abs(value - target) <= tol
    return ReportRow(name, analytic=value, target_ref=ref, passed=passed)


def mc_row(name: str, target: float, est: McEstimate, ref: str) -> ReportRow:
    check = z_test(est, target)
    if not check.passed:
        logger.warning(f"{name}: {check.detail}")
    return ReportRow(name, analytic=target, mc_mean=est.mean, mc_stderr=est.stderr, target_ref=ref,
                     passed=check.passed)


def gof_row(name: str, result: GofResult, ref: str) -> ReportRow:
    """Statistic in mc_mean, critical value in analytic."""
    if not result.passed:
        logger.warning(f"{name}: {result.test_kind.value} {result.statistic:.4g} > {result.threshold:.4g} "
                       f"({result.detail})")
    return ReportRow(name, analytic=result.threshold, mc_mean=result.statistic,
                     target_ref=f"{ref}; {result.test_kind.value} at p=0.001, {result.detail}", passed=result.passed)


def _at(params_match: bool, value: float) -> Optional[float]:
    return value if params_match else None


def _is(x: float, ref: float) -> bool:
    return math.isclose(x, ref, rel_tol=1e-12)


def _mc(s: Settings, name: str, sampler, block_size: int = 1024) -> np.ndarray:
    require(s.seed is not None, f"{name} needs a seed")
    return replicate(sampler, s.n_reps, s.seed, stream=s.stream(name), vectorized=True,
                     block_size=block_size, progress=s.progress)


def _provenance(s: Settings, name: str) -> str:
    return f"seed={s.seed};stream={s.stream(name)};n={s.n_reps}"


# --- crp ---

def _crp_ewens_sum(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    total = math.fsum(crp.ewens_pmf(p, params) for p in crp.enumerate_partitions(s.n))
    return [exact_row("ewens-sum", total, f"sum of Ewens probabilities over partitions of {s.n} = 1", 1.0)]


def _crp_pgf_routes(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    direct = crp.cycles_pgf(s.n, params, 0.5)
    bernoulli = crp.cycles_pgf_bernoulli(s.n, params, 0.5)
    return [exact_row("pgf-routes", direct, "(theta z)_n/(theta)_n = prod of Bernoulli p.g.f.s at z=0.5", bernoulli)]


def _crp_expected_cycles(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    value = crp.expected_cycles(s.n, params)
    pmf = crp.cycles_pmf(s.n, params)
    return [exact_row("expected-cycles", value, "E[K_n] = sum_i theta/(theta+i-1) vs the mean of the law of K_n",
                      float(np.dot(np.arange(pmf.size), pmf)))]


def _crp_ewens_mc(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    n = s.n
    weights = (n + 1) ** np.arange(n)
    values = _mc(s, "crp.ewens", lambda rng, size: crp.sample_cycle_counts(n, params, size, rng) @ weights, 8192)
    parts = crp.enumerate_partitions(n)
    codes = np.array([int(p.as_vector(n) @ weights) for p in parts])
    probs = np.array([crp.ewens_pmf(p, params) for p in parts])
    observed = (values[:, None] == codes[None, :]).sum(axis=0)
    result = chi_square_test(observed, probs / probs.sum())
    return [gof_row("ewens-chi-square-mc", result, f"cycle types at degree {n} ~ Ewens({s.theta:g})")]


def _crp_derangement_mc(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    n = int(max(s.checkpoints))
    values = _mc(s, "crp.derangement", lambda rng, size: crp.singleton_counts(params, n, size, rng) == 0, 8192)
    target = crp.limiting_count_pmf(1, params, 0)
    return [mc_row("derangement-mc", target, summarize(values, _provenance(s, "crp.derangement")),
                   f"P[C_1 = 0] at degree {n} -> e^(-theta)")]


def _crp_occupation_mc(s: Settings) -> List[ReportRow]:
    params = crp.CrpParams(s.theta)
    marks = sorted(int(c) for c in s.checkpoints)
    values = _mc(s, "crp.occupation",
                 lambda rng, size: crp.occupation_fractions(params, 0, marks, size, rng)[:, -1], 8192)
    return [mc_row("occupation-mean-mc", math.exp(-s.theta), summarize(values, _provenance(s, "crp.occupation")),
                   f"E[T_n(0)/n] at n={marks[-1]} -> e^(-theta)")]


# --- walk ---

def _walk_params(s: Settings) -> wk.WalkParams:
    return wk.WalkParams(s.rho)


def _walk_stationary(s: Settings) -> List[ReportRow]:
    return [exact_row("stationary-zero", wk.stationary_pmf(_walk_params(s), 0), "alpha_0 = e^(-rho)/2",
                      math.exp(-s.rho) / 2.0)]


def _walk_mean_length(s: Settings) -> List[ReportRow]:
    value = wk.mean_excursion_length(_walk_params(s), s.c)
    return [exact_row("mean-length", value, "E[kappa_c] = 1 + 2 sum_{j>c} pi_j/pi_c; 2e^rho - 1 at c=0",
                      _at(s.c == 0, 2.0 * math.exp(s.rho) - 1.0), tol=1e-9)]


def _walk_length_variance(s: Settings) -> List[ReportRow]:
    value = wk.var_excursion_length(_walk_params(s))
    return [exact_row("length-variance", value, "Harris series for Var[kappa_0]; 31.72 at rho=1",
                      _at(_is(s.rho, 1.0), 31.72), tol=10 * THREE_DIGITS)]


def _walk_upmoves(s: Settings) -> List[ReportRow]:
    params = _walk_params(s)
    mean = (wk.mean_excursion_length(params, 0) - 1.0) / 2.0
    var = wk.var_excursion_length(params) / 4.0
    published = _is(s.rho, 1.0)
    return [exact_row("upmoves-mean", mean, "E[(kappa_0-1)/2]; 1.718 at rho=1", _at(published, 1.718), THREE_DIGITS),
            exact_row("upmoves-variance", var, "Var[(kappa_0-1)/2]; 7.930 at rho=1", _at(published, 7.930),
                      THREE_DIGITS)]


def _walk_height_moments(s: Settings) -> List[ReportRow]:
    mean, var = wk.height_moments(_walk_params(s))
    published = _is(s.rho, 1.0)
    return [exact_row("height-mean", mean, "E[H_0] = sum_h P[H_0 >= h+1]; 1.887 at rho=1", _at(published, 1.887),
                      THREE_DIGITS),
            exact_row("height-variance", var, "Var[H_0]; 1.242 at rho=1", _at(published, 1.242), THREE_DIGITS)]


def _walk_park_index(s: Settings) -> List[ReportRow]:
    params = _walk_params(s)
    index = wk.park_index(s.m, params)
    window = wk.park_window_probability(params, s.m, index, index + 3)
    return [exact_row("park-index", float(index), f"asymptotic index of the max height over m={s.m} excursions"),
            exact_row("park-window", window, f"P[max height over m={s.m} excursions in [I_m, I_m+3]]")]


def _walk_excursions_mc(s: Settings) -> List[ReportRow]:
    params = _walk_params(s)

    def sampler(rng, size):
        batch = wk.simulate_excursions(params, 0, size, rng)
        return np.column_stack((batch.length, batch.height))

    values = _mc(s, "walk.excursions", sampler)
    length, height = values[:, 0], values[:, 1]
    mean_len = wk.mean_excursion_length(params, 0)
    h_mean, h_var = wk.height_moments(params)
    prov = _provenance(s, "walk.excursions")
    return [mc_row("mean-length-mc", mean_len, summarize(length, prov), "E[kappa_0] = 2e^rho - 1"),
            mc_row("length-variance-mc", wk.var_excursion_length(params), summarize((length - mean_len) ** 2, prov),
                   "Var[kappa_0] by Harris' formula"),
            mc_row("height-mean-mc", h_mean, summarize(height, prov), "E[H_0]; 1.887 at rho=1"),
            mc_row("height-variance-mc", h_var, summarize((height - h_mean) ** 2, prov), "Var[H_0]; 1.242 at rho=1")]


def _walk_occupation_mc(s: Settings) -> List[ReportRow]:
    require(s.seed is not None, "occupation-zero-mc needs a seed")
    params = _walk_params(s)
    n_steps = 10 * s.n_reps
    path = wk.simulate_walk_path(params, n_steps, block_stream(s.seed, 0, s.stream("walk.occupation")))
    est = batch_means(np.column_stack((np.arange(n_steps + 1), path == 0)), PATH_BATCHES, t_end=n_steps + 1)
    return [mc_row("occupation-zero-mc", wk.stationary_pmf(params, 0), est, "long-run fraction at 0 = alpha_0")]


# --- tandem ---

def _tandem_params(s: Settings) -> tandem.TandemParams:
    return tandem.TandemParams(s.theta, s.k)


def _tandem_marginals(s: Settings) -> List[ReportRow]:
    params = _tandem_params(s)
    return [exact_row(f"marginal-mean-c{i}", tandem.transient_marginal_mean(params, i, s.t),
                      f"E[C_{i}(t)] = theta (1-e^-t)^{i}/{i} at t={s.t:g}")
            for i in range(1, min(s.k, 3) + 1)]


def _tandem_steady_zero(s: Settings) -> List[ReportRow]:
    params = _tandem_params(s)
    value = tandem.steady_state_pmf(params, [0] * params.k)
    return [exact_row("steady-zero", value, "P[all C_i = 0, i <= k] = e^(-theta h_k)")]


def _tandem_pascalisation(s: Settings) -> List[ReportRow]:
    params = _tandem_params(s)
    rows = []
    for z in (0.3, 0.5, 1.0):
        residual = tandem.pascalisation_check(params, s.t, z)
        rows.append(ReportRow(f"pascalisation-z{z:g}", analytic=residual,
                              target_ref="negative binomial mixture of (theta z)_n/(theta)_n = e^(theta t (z-1))",
                              passed=residual < PASCAL_TOL))
    return rows


def _tandem_max_cycle(s: Settings) -> List[ReportRow]:
    value = tandem.max_cycle_limit_cdf(s.theta, 1.0)
    return [exact_row("max-cycle-limit", value, "lim P[e^-t M(t) <= 1] = exp(-theta E1(1))")]


def _tandem_marginals_mc(s: Settings) -> List[ReportRow]:
    params = _tandem_params(s)
    top = min(s.k, 3)
    values = _mc(s, "tandem.marginals", lambda rng, size: tandem.tandem_state_at(
        params, s.t, crp.CycleCounts(), rng, size=size).counts[:, :top])
    prov = _provenance(s, "tandem.marginals")
    means = [tandem.transient_marginal_mean(params, i, s.t) for i in range(1, top + 1)]
    rows = [mc_row(f"marginal-mean-c{i}-mc", means[i - 1], summarize(values[:, i - 1], prov),
                   f"C_{i}(t) ~ Poisson(theta (1-e^-t)^{i}/{i})")
            for i in range(1, top + 1)]
    for i in range(1, top + 1):
        result = gof_test(values[:, i - 1], lambda c, m=means[i - 1]: float(stats.poisson.pmf(c, m)),
                          TestKind.CHI_SQUARE)
        rows.append(gof_row(f"marginal-chi-square-c{i}-mc", result, f"C_{i}({s.t:g}) ~ Poisson({means[i - 1]:.6g})"))
    for i in range(1, top + 1):
        for j in range(i + 1, top + 1):
            product = (values[:, i - 1] - means[i - 1]) * (values[:, j - 1] - means[j - 1])
            rows.append(mc_row(f"marginal-cov-c{i}-c{j}-mc", 0.0, summarize(product, prov),
                               f"C_{i}(t), C_{j}(t) independent from the empty start"))
    return rows


def _tandem_max_cycle_mc(s: Settings) -> List[ReportRow]:
    t = MAX_CYCLE_TIME
    values = _mc(s, "tandem.max_cycle", lambda rng, size: tandem.sample_max_cycle(s.theta, t, size, rng), 8192)

    def limit_cdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        return np.array([tandem.max_cycle_limit_cdf(s.theta, v) if v > 0 else 0.0 for v in x])

    result = gof_test(values * math.exp(-t), limit_cdf, TestKind.KS)
    return [gof_row("max-cycle-ks-mc", result, f"e^-t M(t) at t={t:g} vs exp(-theta E1(x))")]


def _tandem_derangement_mc(s: Settings) -> List[ReportRow]:
    require(s.seed is not None, "derangement-time-mc needs a seed")
    params = tandem.TandemParams(s.theta, 1)
    rng = block_stream(s.seed, 0, s.stream("tandem.derangement"))
    t_end = max(1000.0, s.n_reps / 20.0)
    path = tandem.simulate_tandem(params, t_end, tandem.steady_initial(params, rng), rng)
    return [mc_row("derangement-time-mc", math.exp(-s.theta), tandem.derangement_fraction(path, PATH_BATCHES),
                   "time fraction with C_1 = 0 -> e^(-theta)")]


def _tandem_time_change_mc(s: Settings) -> List[ReportRow]:
    require(s.seed is not None, "time-change-mc needs a seed")
    n_samples = min(s.n_reps, TIME_CHANGE_SAMPLES)
    threshold = max(TIME_CHANGE_KS, float(stats.kstwo.ppf(0.999, n_samples)))
    rows = []
    for k, state in TIME_CHANGE_CASES:
        params = tandem.TandemParams(s.theta, k)
        label = "".join(str(c) for c in state.as_vector(k))
        name = f"time-change-k{k}-{label}-mc"
        rng = block_stream(s.seed, 0, s.stream(f"tandem.time_change.{k}.{label}"))
        summary = tandem.time_change_sojourn_check(params, state, s.nu, n_samples, rng)
        # fraction below the median of Exp(r), kept inside the uncensored range
        cut = min(math.log(2.0) / summary.rate, summary.log_horizon / 2.0)
        est = summarize(summary.samples <= cut, _provenance(s, f"tandem.time_change.{k}.{label}"))
        target = -math.expm1(-summary.rate * cut)
        passed = summary.ks_statistic <= threshold and z_test(est, target).passed
        if not passed:
            logger.warning(f"{name}: KS {summary.ks_statistic:.4f} (limit {threshold:.4f}), "
                           f"P[log(M/nu) <= {cut:.4f}] {est.mean:.4f} vs {target:.4f}")
        rows.append(ReportRow(name, analytic=target, mc_mean=est.mean, mc_stderr=est.stderr,
                              target_ref=f"log(M/nu) ~ Exp({summary.rate:g}); KS {summary.ks_statistic:.4f}",
                              passed=passed))
    return rows


# --- mminf ---

def _queue_params(s: Settings) -> mminf.QueueParams:
    return mminf.QueueParams(s.theta, s.mu)


def _mminf_means(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    rho = params.rho
    empty = s.c == 0
    tol = 1e-9 * math.exp(rho)
    return [exact_row("mean-duration", mminf.mean_duration(params, s.c), "E[D_c] = sum_{j>c} pi_j/(theta pi_c)",
                      _at(empty, math.expm1(rho) / params.theta), tol),
            exact_row("mean-area", mminf.mean_area(params, s.c), "E[A_c] = sum_j pi_j (j-c)/(theta pi_c)",
                      _at(empty, rho * math.exp(rho) / params.theta), tol),
            exact_row("mean-arrivals", mminf.mean_arrivals(params, s.c), "E[Delta_c] = sum_{j>c} pi_j/pi_c",
                      _at(empty, math.expm1(rho)), tol)]


def _mminf_moments(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    unit = _is(s.theta, 1.0) and _is(s.mu, 1.0)
    return [exact_row("duration-variance", mminf.duration_variance(params), "Var[D_0]; 4.2123 at theta=mu=1",
                      _at(unit, 4.2123), FOUR_DIGITS),
            exact_row("duration-third-moment", mminf.duration_third_moment(params), "E[D_0^3] series"),
            exact_row("duration-arrivals-cov", mminf.duration_arrivals_covariance(params),
                      "Cov(D_0, Delta_0) from the two Wald identities")]


def _mminf_lt(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    return [exact_row("duration-lt", mminf.duration_lt(params, s.c, s.z),
                      f"E[exp(-z D_c)] = I_(c+1)(z/mu, rho)/I_c(z/mu, rho) at z={s.z:g}")]


def _mminf_root(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    published = _is(params.rho, 1.0) and s.c == 0
    return [exact_row("leading-root", mminf.leading_root(params, s.c),
                      "smallest positive root of M(-z, c+1-z, rho); 0.450 at rho=1, c=0", _at(published, 0.450),
                      THREE_DIGITS)]


def _mminf_first_passage(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    value = mminf.first_passage_mean_sum(params, s.m)
    return [exact_row("first-passage-sum", value, f"sum_(j<=c) E[D_j] at c={s.m}, compare log(c)/mu")]


def _mminf_excursions_mc(s: Settings) -> List[ReportRow]:
    params = _queue_params(s)
    c = s.c

    def sampler(rng, size):
        batch = mminf.simulate_queue_excursions(params, c, size, rng)
        return np.column_stack((batch.duration, batch.area, batch.arrivals, np.exp(-s.z * batch.duration)))

    values = _mc(s, "mminf.excursions", sampler)
    duration, area, arrivals, lt = values.T
    prov = _provenance(s, "mminf.excursions")
    gap = arrivals - params.theta * duration
    rows = [mc_row("mean-duration-mc", mminf.mean_duration(params, c), summarize(duration, prov), "E[D_c]"),
            mc_row("mean-area-mc", mminf.mean_area(params, c), summarize(area, prov), "E[A_c]"),
            mc_row("mean-arrivals-mc", mminf.mean_arrivals(params, c), summarize(arrivals, prov), "E[Delta_c]"),
            mc_row("wald-first-mc", 0.0, summarize(gap, prov), "E[Delta_c - theta D_c] = 0"),
            mc_row("wald-second-mc", mminf.mean_arrivals(params, c), summarize(gap ** 2, prov),
                   "E[(Delta_c - theta D_c)^2] = E[Delta_c]"),
            mc_row("duration-lt-mc", mminf.duration_lt(params, c, s.z), summarize(lt, prov),
                   f"E[exp(-z D_c)] at z={s.z:g}")]
    if c == 0:
        mean = mminf.mean_duration(params, 0)
        rows.append(mc_row("duration-variance-mc", mminf.duration_variance(params),
                           summarize((duration - mean) ** 2, prov), "Var[D_0]; 4.2123 at theta=mu=1"))
    return rows


# --- busy ---

def _busy_params(s: Settings) -> busy.MgParams:
    return busy.MgParams(s.theta, s.k)


def _busy_moments(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    published = {1: 4.2123, 2: 12.7921}.get(s.k) if _is(s.theta, 1.0) else None
    return [exact_row("busy-mean", busy.busy_mean(params), "E[D_0] = (e^rho - 1)/theta, rho = theta h_k"),
            exact_row("busy-variance", busy.busy_variance(params),
                      "Var[D_0]; 4.2123 for k=1 and 12.7921 for k=2 at theta=1", published, FOUR_DIGITS)]


def _busy_tail(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    tail = busy.tail_asymptotics(params)
    published = _is(s.theta, 1.0) and s.k == 2
    renewal = tail.alpha * params.theta / math.expm1(params.rho)
    return [exact_row("tail-beta", tail.beta, "L(-beta) = 0; 0.2734 at theta=1, k=2", _at(published, 0.2734),
                      FOUR_DIGITS),
            exact_row("tail-alpha", tail.alpha, "1 - F(t) ~ alpha e^(-beta t)"),
            exact_row("tail-alpha-star", tail.alpha_star, "f*(t) ~ alpha* e^(-beta t); alpha theta/(e^rho - 1)",
                      renewal, busy.ALPHA_STAR_AGREEMENT * max(1.0, renewal)),
            exact_row("tail-renewal-mass", tail.renewal_mass, "int e^(beta t) (-pi_0'(t)) dt = 1 at the root",
                      1.0, busy.ALPHA_STAR_AGREEMENT)]


def _busy_dstar(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    value = busy.dstar_lt(params, s.z)
    return [exact_row("dstar-lt", value, f"E[exp(-z D_0*)] = (1/L(z) - 1)/(e^rho - 1) at z={s.z:g}",
                      busy.integrated_tail_lt(params, s.z), tol=1e-8)]


def _busy_mc(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    values = _mc(s, "busy.periods", lambda rng, size: busy.simulate_busy_periods(params, size, rng).duration)
    prov = _provenance(s, "busy.periods")
    mean = busy.busy_mean(params)
    return [mc_row("busy-mean-mc", mean, summarize(values, prov), "E[D_0] = (e^rho - 1)/theta"),
            mc_row("busy-variance-mc", busy.busy_variance(params), summarize((values - mean) ** 2, prov),
                   "Var[D_0] from the integral of pi_0(t) - pi_0")]


def _busy_tail_slope_mc(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    values = _mc(s, "busy.tail", lambda rng, size: busy.simulate_busy_periods(params, size, rng).duration)
    beta = busy.tail_asymptotics(params).beta
    slope = busy.empirical_tail_slope(values)
    passed = abs(slope + beta) <= TAIL_SLOPE_REL * beta
    if not passed:
        logger.warning(f"tail-slope-mc: fitted slope {slope:.4f} vs -beta = {-beta:.4f}")
    return [ReportRow("tail-slope-mc", analytic=-beta, mc_mean=slope,
                      target_ref=f"slope of log P[D_0 > t] -> -beta, within {TAIL_SLOPE_REL:.0%}; "
                                 f"{_provenance(s, 'busy.tail')}",
                      passed=passed)]


def _busy_dstar_mc(s: Settings) -> List[ReportRow]:
    params = _busy_params(s)
    values = _mc(s, "busy.dstar", lambda rng, size: np.exp(-s.z * busy.sample_dstar_geometric(params, rng, size)))
    return [mc_row("dstar-lt-mc", busy.dstar_lt(params, s.z), summarize(values, _provenance(s, "busy.dstar")),
                   "geometric-sum representation of D_0*")]


# --- tagged ---

def _tagged_params(s: Settings) -> tg.TaggedParams:
    return tg.TaggedParams.cycle_sizes(s.theta, max(s.k, 2))


def _tagged_analytic(s: Settings) -> List[ReportRow]:
    params = _tagged_params(s)
    k = params.n_phases
    return [exact_row("correlation-1-2", tg.correlation(1, 2), "corr(L_1, L_2) = sqrt(2)/6"),
            exact_row("covariance-1-2", tg.covariance(params, 1, 2), "cov(L_1, L_2) = theta/6 for mu_i = i"),
            exact_row(f"lagrange-1-{k}", tg.lagrange_correlation(params.rates, 1, k),
                      "Lagrange interpolation of sqrt at 0", tg.correlation(1, k), tol=1e-9)]


def _tagged_mc(s: Settings) -> List[ReportRow]:
    require(s.seed is not None, "correlation-mc needs a seed")
    params = _tagged_params(s)
    rng = block_stream(s.seed, 0, s.stream("tagged.correlation"))
    sample = tg.simulate_tagged(params, s.n_reps, TAGGED_WARMUP, rng)
    pairs = np.array_split(sample.occupancies[:, :2].astype(float), TAGGED_BATCHES)
    per_batch = [np.corrcoef(p[:, 0], p[:, 1])[0, 1] for p in pairs]
    est = summarize(per_batch, _provenance(s, "tagged.correlation"))
    return [mc_row("correlation-1-2-mc", tg.correlation(1, 2), est, "corr(L_1, L_2) = sqrt(2)/6, batch means")]


# ---------------- Registry ----------------
def _q(name: str, kind: Kind, compute) -> Quantity:
    return Quantity(name, kind, compute)


A, S = Kind.ANALYTIC, Kind.STOCHASTIC
QUANTITIES: Dict[str, Dict[str, Quantity]] = {
    "crp": {q.name: q for q in [
        _q("ewens-sum", A, _crp_ewens_sum), _q("pgf-routes", A, _crp_pgf_routes),
        _q("expected-cycles", A, _crp_expected_cycles), _q("derangement-mc", S, _crp_derangement_mc),
        _q("occupation-mean-mc", S, _crp_occupation_mc), _q("ewens-chi-square-mc", S, _crp_ewens_mc)]},
    "walk": {q.name: q for q in [
        _q("stationary-zero", A, _walk_stationary), _q("mean-length", A, _walk_mean_length),
        _q("length-variance", A, _walk_length_variance), _q("upmoves", A, _walk_upmoves),
        _q("height-moments", A, _walk_height_moments), _q("park-index", A, _walk_park_index),
        _q("excursions-mc", S, _walk_excursions_mc), _q("occupation-zero-mc", S, _walk_occupation_mc)]},
    "tandem": {q.name: q for q in [
        _q("marginal-means", A, _tandem_marginals), _q("steady-zero", A, _tandem_steady_zero),
        _q("pascalisation", A, _tandem_pascalisation), _q("max-cycle-limit", A, _tandem_max_cycle),
        _q("marginal-means-mc", S, _tandem_marginals_mc), _q("derangement-time-mc", S, _tandem_derangement_mc),
        _q("time-change-mc", S, _tandem_time_change_mc), _q("max-cycle-ks-mc", S, _tandem_max_cycle_mc)]},
    "mminf": {q.name: q for q in [
        _q("means", A, _mminf_means), _q("moments", A, _mminf_moments), _q("duration-lt", A, _mminf_lt),
        _q("leading-root", A, _mminf_root), _q("first-passage-sum", A, _mminf_first_passage),
        _q("excursions-mc", S, _mminf_excursions_mc)]},
    "busy": {q.name: q for q in [
        _q("moments", A, _busy_moments), _q("tail", A, _busy_tail), _q("dstar-lt", A, _busy_dstar),
        _q("periods-mc", S, _busy_mc), _q("dstar-lt-mc", S, _busy_dstar_mc),
        _q("tail-slope-mc", S, _busy_tail_slope_mc)]},
    "tagged": {q.name: q for q in [
        _q("correlations", A, _tagged_analytic), _q("correlation-mc", S, _tagged_mc)]},
}
# `--quantity height-moments` style aliases for whole groups
ALIASES = {("busy", "tail-beta"): "tail", ("walk", "height-mean"): "height-moments",
           ("tandem", "marginals-chi-square-mc"): "marginal-means-mc"}


def resolve(command: str, names: Sequence[str]) -> List[Quantity]:
    """Quantities for a command; no names means all of them."""
    table = QUANTITIES[command]
    if not names:
        return list(table.values())
    chosen = []
    for name in names:
        name = ALIASES.get((command, name), name)
        if name not in table:
            raise KeyError(name)
        chosen.append(table[name])
    return chosen


def compute(command: str, quantities: Sequence[Quantity], settings: Settings) -> List[ReportRow]:
    rows: List[ReportRow] = []
    for quantity in quantities:
        logger.info(f"{command}: computing {quantity.name} ({quantity.kind.value})")
        rows.extend(quantity.compute(settings))
    return rows
