import numpy as np
import pytest

from bessagg.core import HOURS, InvalidArgumentError, aggregate_units, battery_step
from bessagg.optimize import build_da, solve
from bessagg.scenario import single_joint
from bessagg.sim import CaseConfig, Dataset, MarketDay, MarketParams, ModelCache, run_day, run_horizon
from bessagg.synth import SynthSpec, generate

TRAIN = 38


@pytest.fixture(scope="module")
def data():
    return generate(SynthSpec(seed=3, n_units=2, n_days=40))


@pytest.fixture(scope="module")
def cache():
    return ModelCache()


def test_case_config_validation():
    with pytest.raises(InvalidArgumentError):
        CaseConfig(4)
    with pytest.raises(InvalidArgumentError):
        CaseConfig(1, n_raw=3, k_preserve=5)
    assert CaseConfig(2).name == "aggregation + naive"


def test_market_day_validation():
    ok = np.full(HOURS, 0.2)
    with pytest.raises(InvalidArgumentError):
        MarketDay(ok[:23], ok, ok, ok)
    with pytest.raises(InvalidArgumentError):
        MarketDay(ok, ok, -ok, ok)
    with pytest.raises(InvalidArgumentError):
        MarketDay(ok, np.full(HOURS, np.nan), ok, ok)


def test_dataset_rejects_misaligned_units(data):
    with pytest.raises(InvalidArgumentError):
        Dataset(data.units, data.da_prices.slice(0, 24 * 39), data.rt_prices)


def test_window_checks(data):
    with pytest.raises(InvalidArgumentError):
        run_horizon(CaseConfig(2), data, TRAIN, 3)


@pytest.fixture(scope="module")
def stochastic_day(data, cache):
    return run_horizon(CaseConfig(1, seed=11), data, TRAIN, 1, cache=cache)


def test_scenario_counts_per_step(stochastic_day):
    day = stochastic_day.days[0][0]
    assert [s.hour for s in day.steps] == list(range(HOURS))
    for step in day.steps:
        assert set(step.raw.values()) == {50}
        assert set(step.preserved.values()) == {5}
        assert step.joint == 125


def test_day_result_is_consistent(stochastic_day, data):
    day = stochastic_day.days[0][0]
    pv = sum(u.pv_history.values for u in data.units)[TRAIN * HOURS:(TRAIN + 1) * HOURS]
    dem = sum(u.demand_history.values for u in data.units)[TRAIN * HOURS:(TRAIN + 1) * HOURS]
    s = day.storage_traj
    for t in range(HOURS):
        step = battery_step(s[t], day.schedule[t], pv[t], dem[t], day.rt_bids[t], 0.9)
        assert s[t + 1] == pytest.approx(step, abs=1e-6)
    assert day.resettle().total == pytest.approx(day.cost_total, abs=1e-9)
    assert len(day.solve_times) == HOURS + 1 and np.all(day.solve_times > 0)


def test_runs_are_bit_identical(data, stochastic_day):
    again = run_horizon(CaseConfig(1, seed=11), data, TRAIN, 1)
    a, b = stochastic_day.days[0][0], again.days[0][0]
    assert np.array_equal(a.rt_bids, b.rt_bids)
    assert np.array_equal(a.storage_traj, b.storage_traj)
    assert a.cost == b.cost


def test_storage_carries_between_days(data, cache):
    res = run_horizon(CaseConfig(2), data, TRAIN, 2, cache=cache)
    first, second = res.days[0]
    assert second.storage_traj[0] == first.carry_out
    assert res.total.total == pytest.approx(res.daily_totals.sum(), abs=1e-9)


def test_naive_with_repeated_day_is_perfect_foresight(data):
    agg, pv, dem = aggregate_units(data.units, 0.4, 0.05, c_max=4.0)
    lo = TRAIN * HOURS
    today = {"rt_price": data.rt_prices.values[lo:lo + HOURS], "pv": pv.values[lo:lo + HOURS],
             "demand": dem.values[lo:lo + HOURS]}
    history = {q: np.concatenate([np.zeros(HOURS), v]) for q, v in today.items()}
    day = MarketDay(data.da_prices.values[lo:lo + HOURS], today["rt_price"], today["pv"], today["demand"])
    result = run_day(CaseConfig(2), day, agg, None, history, agg.battery.s_init)
    oracle = solve(build_da(agg, day.da_prices, single_joint(today, range(1, HOURS + 1))))
    assert result.cost_total == pytest.approx(oracle.objective, abs=1e-4)


def test_single_unit_cases_agree(data, cache):
    one = Dataset(data.units[:1], data.da_prices, data.rt_prices)
    params = MarketParams()
    a = run_horizon(CaseConfig(1, n_raw=8, k_preserve=2), one, TRAIN, 1, params, cache)
    b = run_horizon(CaseConfig(3, n_raw=8, k_preserve=2), one, TRAIN, 1, params, cache)
    assert a.total.total == pytest.approx(b.total.total, abs=1e-9)


def test_per_unit_total_is_sum(data, cache):
    res = run_horizon(CaseConfig(3, n_raw=8, k_preserve=2), data, TRAIN, 1, cache=cache)
    assert len(res.days) == len(data.units)
    per_unit = sum(days[0].cost_total for days in res.days)
    assert res.total.total == pytest.approx(per_unit, abs=1e-9)
