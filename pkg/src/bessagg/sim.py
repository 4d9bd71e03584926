"""Rolling-horizon two-settlement simulation and case comparison.

Each simulated day runs one day-ahead solve followed by 24 real-time
solves. Realized PV, demand and prices drive the storage forward, and
the day is settled at realized prices. Three operating cases are
supported:

1. units aggregated into one virtual battery, stochastic bidding
2. units aggregated, deterministic bidding that assumes yesterday repeats
3. every unit bids on its own with the stochastic model
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import forecast as fc_mod
from .core import (HOURS, ZERO_COST, AggregatorSpec, BidSchedule, CostBreakdown, HourlySeries,
                   InvalidArgumentError, UnitSpec, aggregate_units, battery_step, realized_cost)
from .errormodel import GaussianErrorModel, estimate
from .forecast import SarimaModel, SarimaOrders
from .optimize import (OPTIMAL, QuadraticProgram, build_da, build_rt, commitments_from, naive_baseline_da,
                       naive_baseline_rt, solve)
from .scenario import QUANTITIES, cross_product, generate_da, generate_rt, reduce

logger = logging.getLogger(__name__)

CASE_NAMES = {
    1: "aggregation + stochastic",
    2: "aggregation + naive",
    3: "per-unit stochastic",
}


class SolverFailure(RuntimeError):
    """A day-ahead or real-time solve did not reach optimality."""

    def __init__(self, message: str, hour: int, state: float, qp: QuadraticProgram | None = None):
        super().__init__(message)
        self.hour = hour
        self.state = state
        self.qp = qp


def default_orders() -> dict:
    return {q: SarimaOrders() for q in QUANTITIES}


@dataclass(frozen=True)
class CaseConfig:
    case: int
    n_raw: int = 50
    k_preserve: int = 5
    seed: int = 0
    orders: dict = field(default_factory=default_orders)

    def __post_init__(self):
        if self.case not in CASE_NAMES:
            raise InvalidArgumentError(f"case must be one of {sorted(CASE_NAMES)}, got {self.case}")
        if not self.n_raw >= self.k_preserve >= 1:
            raise InvalidArgumentError("scenario counts must satisfy n_raw >= k_preserve >= 1")

    @property
    def name(self) -> str:
        return CASE_NAMES[self.case]


@dataclass(frozen=True)
class MarketDay:
    da_prices: np.ndarray
    rt_prices: np.ndarray
    pv_actual: np.ndarray
    demand_actual: np.ndarray
    label: str = ""

    def __post_init__(self):
        for name in ("da_prices", "rt_prices", "pv_actual", "demand_actual"):
            arr = np.array(getattr(self, name), dtype=float)
            if arr.shape != (HOURS,) or not np.all(np.isfinite(arr)):
                raise InvalidArgumentError(f"{name} must be 24 finite values")
            if name in ("pv_actual", "demand_actual") and np.any(arr < 0):
                raise InvalidArgumentError(f"{name} must be non-negative")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def actual(self, quantity: str) -> np.ndarray:
        return {"rt_price": self.rt_prices, "pv": self.pv_actual, "demand": self.demand_actual}[quantity]


@dataclass(frozen=True)
class QuantityModel:
    """SARIMA point forecast plus the Gaussian model of its day-ahead errors."""

    quantity: str
    sarima: SarimaModel
    errors: GaussianErrorModel
    zero_hours: np.ndarray

    def forecast(self, history: np.ndarray) -> np.ndarray:
        return self._adjust(fc_mod.forecast(self.sarima, history, HOURS))

    def _adjust(self, values: np.ndarray) -> np.ndarray:
        out = np.where(self.zero_hours, 0.0, values)
        if self.quantity != "rt_price":
            out = np.maximum(out, 0.0)
        return out


def train_quantity(quantity: str, history: np.ndarray, orders: SarimaOrders) -> QuantityModel:
    """Fit SARIMA on ``history`` and the error model on its replayed forecasts.

    Hours of the day that are zero throughout the history (PV at night)
    are forecast as exactly zero and get zero error variance.
    """
    y = np.asarray(history, dtype=float)
    if y.size % HOURS:
        raise InvalidArgumentError("training history must cover whole days")
    daily = y.reshape(-1, HOURS)
    zero_hours = np.all(daily == 0.0, axis=0) if quantity != "rt_price" else np.zeros(HOURS, dtype=bool)
    zero_hours.setflags(write=False)
    model = fc_mod.fit(y, orders)
    resid = fc_mod.residual_matrix(model, y)
    actual = daily[daily.shape[0] - resid.shape[0]:]
    probe = QuantityModel(quantity, model, GaussianErrorModel.zero(), zero_hours)
    errors = actual - probe._adjust(actual - resid)
    return QuantityModel(quantity, model, estimate(errors), zero_hours)


@dataclass(frozen=True)
class StepLog:
    """Scenario counts used by one decision step (hour 0 is the day-ahead stage)."""

    hour: int
    raw: dict
    preserved: dict
    joint: int


@dataclass(frozen=True)
class DayResult:
    label: str
    schedule: BidSchedule
    rt_bids: np.ndarray
    storage_traj: np.ndarray
    cost: CostBreakdown
    solve_times: np.ndarray
    da_prices: np.ndarray
    rt_prices: np.ndarray
    alpha: float
    beta: float
    steps: tuple = ()
    da_scenarios: dict = field(default_factory=dict, compare=False)

    @property
    def cost_total(self) -> float:
        return self.cost.total

    @property
    def carry_out(self) -> float:
        return float(self.storage_traj[-1])

    def resettle(self) -> CostBreakdown:
        return realized_cost(self.schedule, self.rt_bids, self.rt_prices, self.da_prices, self.storage_traj,
                             self.alpha, self.beta)


def _seed(config: CaseConfig, day_index: int, hour: int, quantity: str, stream: int) -> tuple:
    # prices share one stream so every case and unit sees the same price scenarios
    q = QUANTITIES.index(quantity)
    return (config.seed, day_index, hour, q, 0 if quantity == "rt_price" else stream)


def _checked(qp: QuadraticProgram, hour: int, state: float, tol: float):
    sol = solve(qp, tol)
    if sol.status != OPTIMAL:
        raise SolverFailure(f"solve at hour {hour} ended with status {sol.status} (storage {state:.6g})",
                            hour, state, qp)
    return sol


def run_day(config: CaseConfig, day: MarketDay, agg: AggregatorSpec, models: dict | None,
            history: dict, s_init: float, day_index: int = 0, stream: int = 0, tol: float = 1e-6) -> DayResult:
    """Simulate one day for one resource.

    ``history`` maps each quantity to its realized values strictly before
    the day (whole days). ``models`` maps quantities to trained
    :class:`QuantityModel` objects and is unused by the naive case.
    """
    agg = AggregatorSpec(agg.battery.with_initial(s_init), agg.c_max, agg.alpha, agg.beta, agg.n_units)
    eta = agg.battery.eta
    times = np.zeros(HOURS + 1)
    steps = []
    fan = {}
    naive = config.case == 2

    t0 = time.perf_counter()
    if naive:
        yesterday = {q: np.asarray(history[q], dtype=float)[-HOURS:] for q in QUANTITIES}
        schedule, _ = naive_baseline_da(agg, day.da_prices, yesterday, tol)
    else:
        forecasts = {q: models[q].forecast(history[q]) for q in QUANTITIES}
        reduced = []
        raw_counts, kept_counts = {}, {}
        for q in QUANTITIES:
            raw = generate_da(forecasts[q], models[q].errors, config.n_raw, _seed(config, day_index, 0, q, stream), q)
            red = reduce(raw, config.k_preserve)
            raw_counts[q], kept_counts[q] = len(raw), len(red)
            reduced.append(red)
            fan[q] = (forecasts[q], red)
        joint = cross_product(reduced)
        steps.append(StepLog(0, raw_counts, kept_counts, len(joint)))
        sol = _checked(build_da(agg, day.da_prices, joint), 0, s_init, tol)
        schedule = commitments_from(sol, agg)
    times[0] = time.perf_counter() - t0

    s = np.zeros(HOURS + 1)
    s[0] = s_init
    x = np.zeros(HOURS)
    for t in range(1, HOURS + 1):
        t0 = time.perf_counter()
        obs = {q: float(day.actual(q)[t - 1]) for q in QUANTITIES}
        if naive:
            x[t - 1], _ = naive_baseline_rt(agg, t, s[t - 1], schedule, obs, yesterday, tol)
        else:
            joint = None
            if t < HOURS:
                reduced = []
                raw_counts, kept_counts = {}, {}
                for q in QUANTITIES:
                    raw = generate_rt(forecasts[q], models[q].errors, day.actual(q)[:t], config.n_raw,
                                      _seed(config, day_index, t, q, stream), q)
                    red = reduce(raw, config.k_preserve)
                    raw_counts[q], kept_counts[q] = len(raw), len(red)
                    reduced.append(red)
                joint = cross_product(reduced)
                steps.append(StepLog(t, raw_counts, kept_counts, len(joint)))
            sol = _checked(build_rt(agg, t, s[t - 1], schedule, obs, joint), t, s[t - 1], tol)
            x[t - 1] = float(sol["x_now"])
        s[t] = battery_step(s[t - 1], schedule[t - 1], obs["pv"], obs["demand"], x[t - 1], eta)
        times[t] = time.perf_counter() - t0

    cost = realized_cost(schedule, x, day.rt_prices, day.da_prices, s, agg.alpha, agg.beta)
    for arr in (x, s, times):
        arr.setflags(write=False)
    return DayResult(day.label, schedule, x, s, cost, times, day.da_prices, day.rt_prices, agg.alpha, agg.beta,
                     tuple(steps), fan)


# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Dataset:
    """Aligned unit histories and market prices covering training and evaluation."""

    units: tuple
    da_prices: HourlySeries
    rt_prices: HourlySeries

    def __post_init__(self):
        if not self.units:
            raise InvalidArgumentError("dataset has no units")
        n = len(self.da_prices)
        if len(self.rt_prices) != n or self.rt_prices.start_time != self.da_prices.start_time:
            raise InvalidArgumentError("day-ahead and real-time prices cover different ranges")
        for u in self.units:
            if len(u.pv_history) != n or u.pv_history.start_time != self.da_prices.start_time:
                raise InvalidArgumentError(f"unit {u.id} does not cover the price range")
        if n % HOURS:
            raise InvalidArgumentError("dataset length must be a multiple of 24 hours")
        object.__setattr__(self, "units", tuple(self.units))

    @property
    def n_days(self) -> int:
        return len(self.da_prices) // HOURS


@dataclass(frozen=True)
class MarketParams:
    alpha: float = 0.4
    beta: float = 0.05
    c_max_per_unit: float = 2.0


@dataclass
class Resource:
    """One bidding entity: the aggregate or a single unit."""

    agg: AggregatorSpec
    pv: np.ndarray
    demand: np.ndarray
    stream: int
    models: dict | None = None


@dataclass(frozen=True)
class HorizonResult:
    config: CaseConfig
    days: tuple          # DayResults per resource: days[r][d]
    total: CostBreakdown

    @property
    def daily_totals(self) -> np.ndarray:
        return np.sum([[d.cost_total for d in res_days] for res_days in self.days], axis=0)


def _resources(case: int, data: Dataset, params: MarketParams) -> list[Resource]:
    if case in (1, 2):
        agg, pv, dem = aggregate_units(data.units, params.alpha, params.beta,
                                       c_max=params.c_max_per_unit * len(data.units))
        return [Resource(agg, pv.values, dem.values, 0)]
    out = []
    for i, unit in enumerate(data.units):
        agg, pv, dem = aggregate_units([unit], params.alpha, params.beta, c_max=params.c_max_per_unit)
        out.append(Resource(agg, pv.values, dem.values, i))
    return out


class ModelCache:
    """Trains each (series, orders) pair once so cases can share fits."""

    def __init__(self):
        self._store = {}

    def get(self, quantity: str, values: np.ndarray, orders: SarimaOrders) -> QuantityModel:
        key = (quantity, str(orders), values.tobytes())
        if key not in self._store:
            self._store[key] = train_quantity(quantity, values, orders)
        return self._store[key]


def run_horizon(config: CaseConfig, data: Dataset, train_days: int, eval_days: int | None = None,
                params: MarketParams = MarketParams(), cache: ModelCache | None = None) -> HorizonResult:
    """Train on the first ``train_days`` days and simulate the following ``eval_days``.

    Models are fitted once before the window and not refitted. Storage
    carries over from each day's end to the next day's start.
    """
    if eval_days is None:
        eval_days = data.n_days - train_days
    if train_days < 1 or eval_days < 1 or train_days + eval_days > data.n_days:
        raise InvalidArgumentError(
            f"window of {train_days} training + {eval_days} evaluation days exceeds {data.n_days} available days")
    cache = cache or ModelCache()
    split = train_days * HOURS
    da = data.da_prices.values
    rt = data.rt_prices.values
    resources = _resources(config.case, data, params)
    if config.case != 2:
        price_model = cache.get("rt_price", rt[:split], config.orders["rt_price"])
        for r in resources:
            r.models = {
                "rt_price": price_model,
                "pv": cache.get("pv", r.pv[:split], config.orders["pv"]),
                "demand": cache.get("demand", r.demand[:split], config.orders["demand"]),
            }

    all_days = []
    total = ZERO_COST
    for r in resources:
        series = {"rt_price": rt, "pv": r.pv, "demand": r.demand}
        s = r.agg.battery.s_init
        res_days = []
        for d in range(eval_days):
            lo = split + d * HOURS
            hi = lo + HOURS
            day = MarketDay(da[lo:hi], rt[lo:hi], r.pv[lo:hi], r.demand[lo:hi],
                            label=data.da_prices.timestamps()[lo].date().isoformat())
            history = {q: v[:lo] for q, v in series.items()}
            result = run_day(config, day, r.agg, r.models, history, s, day_index=d, stream=r.stream)
            s = result.carry_out
            res_days.append(result)
            total = total + result.cost
        all_days.append(tuple(res_days))
        logger.info("case %d resource %d: total %.4f", config.case, r.stream, sum(x.cost_total for x in res_days))
    return HorizonResult(config, tuple(all_days), total)


def compare_cases(configs: Sequence[CaseConfig], data: Dataset, train_days: int, eval_days: int | None = None,
                  params: MarketParams = MarketParams()) -> dict:
    """Run every case on the same data, sharing model fits and price scenarios."""
    cache = ModelCache()
    return {cfg.case: run_horizon(cfg, data, train_days, eval_days, params, cache) for cfg in configs}


def comparison_rows(results: dict) -> list[dict]:
    rows = []
    for case, res in sorted(results.items()):
        row = {"case": case, "name": CASE_NAMES[case]}
        row.update(res.total.as_dict())
        rows.append(row)
    return rows
