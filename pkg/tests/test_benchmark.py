import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from iesched.benchmark import (InfeasibleScheduleError, LPIndex, benchmark_schedule, build_day_ahead_lp, churn,
                               lp_solution_to_schedule)
from iesched.core import DayProfile, PriceBook, SystemConfig, check_feasibility, make_schedule, total_cost_day
from iesched.lp import OPTIMAL, SolveReport, solve
from conftest import random_profile
from oracles import brute_force_tiny, no_storage, no_storage_optimum, tiny_config


def test_variable_count(cfg, prices, day):
    p = build_day_ahead_lp(cfg, day, prices)
    assert p.n == 24 * 16 == 384


def test_zero_forecast_without_storage_is_zero():
    c = no_storage()
    r = solve(build_day_ahead_lp(c, DayProfile.zeros(), PriceBook()))
    assert r.status == OPTIMAL and np.allclose(r.x, 0) and r.objective == pytest.approx(0)


@pytest.mark.parametrize("method", ["simplex", "highs"])
def test_heat_only_day_uses_boiler(method):
    c = no_storage()
    f = DayProfile(np.zeros(24), np.full(24, 81.0), np.zeros(24), np.zeros(24))
    r = solve(build_day_ahead_lp(c, f, PriceBook()), method=method)
    assert r.objective == pytest.approx(90 * 0.013 * 24) == pytest.approx(28.08)
    s = lp_solution_to_schedule(c, r)
    assert np.allclose(s.G_B, 90) and np.allclose(s.G_CHP, 0) and np.allclose(s.v_B, 1)


def test_solution_mapping_examples():
    c = tiny_config()
    idx = LPIndex(4, 2)
    x = np.zeros(idx.n)
    x[idx.var("G_CHP", 0)] = x[idx.var("G_B", 0)] = 150
    x[idx.var("S_G", 0)] = 300
    x[idx.ch(0, 2)] = 5
    s = lp_solution_to_schedule(c, SolveReport(OPTIMAL, 0.0, x, 0, "test"))
    assert s.v_CHP[0] == s.v_B[0] == 0.5
    assert s.S_EV[0, 2] == -5
    zero = lp_solution_to_schedule(c, SolveReport(OPTIMAL, 0.0, np.zeros(idx.n), 0, "test"))
    assert np.all(zero.storage() == 0) and np.all(zero.S_E == 0)


@given(st.integers(0, 10_000))
def test_no_storage_lp_matches_closed_form(seed):
    c = no_storage()
    rng = np.random.default_rng(seed)
    p = PriceBook(C_E_DA=rng.uniform(0.02, 0.05, 24), C_G_DA=rng.uniform(0.008, 0.02, 24), C_E_plus=0.06,
                  C_G_plus=0.03, C_E_minus=0.005, C_G_minus=0.005)
    f = random_profile(rng)
    r = solve(build_day_ahead_lp(c, f, p))
    assert r.objective == pytest.approx(no_storage_optimum(c, p, f), abs=1e-7)


@pytest.mark.parametrize("seed", range(6))
def test_lp_not_above_grid_search(seed):
    c = tiny_config()
    rng = np.random.default_rng(seed)
    p = PriceBook(T=4, C_E_DA=rng.uniform(0.02, 0.05, 4), C_G_DA=rng.uniform(0.008, 0.02, 4), C_E_plus=0.06,
                  C_G_plus=0.03, C_E_minus=0.005, C_G_minus=0.005)
    f = random_profile(rng, T=4)
    best, _ = brute_force_tiny(c, p, f)
    r = solve(build_day_ahead_lp(c, f, p))
    assert r.objective <= best + 1e-6
    assert check_feasibility(c, f, lp_solution_to_schedule(c, r)) == []


def test_refined_schedule_is_physical_and_balanced(cfg, prices, day):
    res = benchmark_schedule(cfg, day, prices)
    s = res.schedule
    assert check_feasibility(cfg, day, s) == []
    assert churn(cfg, res.report) <= 1e-6
    led = total_cost_day(cfg, s, day, day, prices)
    # settled cost pays rewards on |S|, which the refined LP prices exactly
    assert led.total == pytest.approx(res.report.objective, abs=1e-6)
    assert res.relaxed.objective <= res.report.objective + 1e-9


def test_refinement_never_worse_than_relaxed_physical_cost(cfg, prices, days):
    for d in days[:5]:
        res = benchmark_schedule(cfg, d, prices)
        relaxed = lp_solution_to_schedule(cfg, res.relaxed)
        assert total_cost_day(cfg, res.schedule, d, d, prices).total <= \
            total_cost_day(cfg, relaxed, d, d, prices).total + 1e-6


def test_simplex_and_highs_agree_on_a_day(cfg, prices, day):
    a = solve(build_day_ahead_lp(cfg, day, prices), method="simplex")
    b = solve(build_day_ahead_lp(cfg, day, prices), method="highs")
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_surplus_day_is_infeasible_with_slots():
    c = no_storage()
    f = DayProfile(np.full(24, 10.0), np.full(24, 50.0), np.full(24, 100.0), np.zeros(24))
    with pytest.raises(InfeasibleScheduleError) as exc:
        benchmark_schedule(c, f, PriceBook())
    assert exc.value.slots == list(range(1, 25))


@given(st.integers(0, 10_000))
def test_zero_error_settlement_has_no_extra_cost(seed):
    c, p = SystemConfig(), PriceBook()
    f = random_profile(np.random.default_rng(seed))
    s = benchmark_schedule(c, f, p).schedule
    led = total_cost_day(c, s, f, f, p)
    assert abs(led.total_extra) <= 1e-9 * max(1.0, abs(led.total))


def test_solves_are_bitwise_deterministic(cfg, prices, day):
    a = benchmark_schedule(cfg, day, prices)
    b = benchmark_schedule(cfg, day, prices)
    assert np.array_equal(a.report.x, b.report.x) and a.pattern == b.pattern
