# tests/test_experiments.py
import pytest

from cycle_queue import experiments
from cycle_queue.experiments import Kind, ReportRow, Settings
from cycle_queue.utils import DomainError


def test_row_needs_a_value():
    with pytest.raises(DomainError):
        ReportRow("empty")


def test_record_uses_plain_types():
    record = ReportRow("x", analytic=1, passed=1).as_record()
    assert record == {"quantity": "x", "analytic": 1.0, "mc_mean": None, "mc_stderr": None,
                      "target_ref": "", "pass": True}


def test_every_command_has_analytic_and_stochastic_quantities():
    for command, table in experiments.QUANTITIES.items():
        kinds = {q.kind for q in table.values()}
        assert kinds == {Kind.ANALYTIC, Kind.STOCHASTIC}, command


def test_resolve_aliases_and_defaults():
    assert [q.name for q in experiments.resolve("busy", ["tail-beta"])] == ["tail"]
    assert len(experiments.resolve("crp", [])) == len(experiments.QUANTITIES["crp"])
    with pytest.raises(KeyError):
        experiments.resolve("crp", ["nothing"])


def test_streams_differ_by_name():
    s = Settings()
    assert s.stream("walk.excursions") != s.stream("mminf.excursions")


def test_analytic_rows_carry_references():
    settings = Settings(theta=1.0, k=2, n=5)
    rows = experiments.compute("crp", experiments.resolve("crp", ["ewens-sum", "pgf-routes", "expected-cycles"]),
                               settings)
    assert [r.quantity for r in rows] == ["ewens-sum", "pgf-routes", "expected-cycles"]
    assert all(r.target_ref for r in rows)
    assert all(r.passed for r in rows)


def test_pascalisation_rows():
    rows = experiments.compute("tandem", experiments.resolve("tandem", ["pascalisation"]), Settings(t=2.0))
    assert len(rows) == 3
    assert all(r.passed for r in rows)


def test_stochastic_quantity_needs_seed():
    with pytest.raises(DomainError):
        experiments.compute("busy", experiments.resolve("busy", ["periods-mc"]), Settings(seed=None))


def _by_name(command, names, settings):
    rows = experiments.compute(command, experiments.resolve(command, names), settings)
    return {r.quantity: r for r in rows}


def test_published_values_are_checked_at_reference_parameters():
    unit = Settings(theta=1.0, mu=1.0, rho=1.0, c=0, k=2)
    rows = {}
    rows.update(_by_name("walk", ["upmoves", "height-moments", "length-variance", "mean-length"], unit))
    rows.update(_by_name("mminf", ["moments", "leading-root", "means"], unit))
    rows.update(_by_name("busy", ["moments", "tail"], unit))
    for name in ("upmoves-mean", "upmoves-variance", "height-mean", "height-variance", "length-variance",
                 "mean-length", "duration-variance", "leading-root", "mean-duration", "mean-area",
                 "mean-arrivals", "busy-variance", "tail-beta", "tail-alpha-star", "tail-renewal-mass"):
        assert rows[name].passed is True, name
    k1 = _by_name("busy", ["moments"], Settings(theta=1.0, k=1))
    assert k1["busy-variance"].passed is True


def test_published_values_need_matching_parameters():
    rows = _by_name("walk", ["height-moments"], Settings(rho=2.0))
    assert rows["height-mean"].passed is None
    rows = _by_name("busy", ["moments", "tail"], Settings(theta=2.0, k=2))
    assert rows["busy-variance"].passed is None
    assert rows["tail-beta"].passed is None
    assert rows["tail-alpha-star"].passed is True


def test_ewens_chi_square_quantity():
    rows = _by_name("crp", ["ewens-chi-square-mc"], Settings(theta=1.5, n=4, n_reps=20_000, seed=11))
    row = rows["ewens-chi-square-mc"]
    assert row.passed, row.target_ref
    assert row.mc_mean <= row.analytic


def test_marginal_quantity_carries_chi_square_and_covariances():
    settings = Settings(theta=1.0, k=3, t=1.0, n_reps=20_000, seed=12)
    rows = _by_name("tandem", ["marginals-chi-square-mc"], settings)
    assert {"marginal-chi-square-c1-mc", "marginal-chi-square-c3-mc", "marginal-cov-c1-c2-mc",
            "marginal-cov-c2-c3-mc"} <= set(rows)
    assert all(r.passed for r in rows.values())


def test_max_cycle_ks_quantity():
    rows = _by_name("tandem", ["max-cycle-ks-mc"], Settings(theta=1.0, n_reps=10_000, seed=13))
    assert rows["max-cycle-ks-mc"].passed


@pytest.mark.slow
def test_tail_slope_quantity():
    rows = _by_name("busy", ["tail-slope-mc"], Settings(theta=1.0, k=2, n_reps=200_000, seed=14))
    row = rows["tail-slope-mc"]
    assert row.analytic == pytest.approx(-0.2734, abs=1e-4)
    assert row.passed, row.mc_mean
