"""Domain types, battery dynamics and aggregation of residential units."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import Sequence

import numpy as np

HOURS = 24
UNITS = ("currency/kWh", "kW", "kWh")


class InvalidArgumentError(ValueError):
    """Raised when an input violates a documented precondition."""


def _frozen_array(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class HourlySeries:
    """Hourly values starting at ``start_time``; index i is hour offset i."""

    start_time: datetime
    values: np.ndarray
    unit: str

    def __post_init__(self):
        vals = _frozen_array(self.values)
        if vals.ndim != 1 or vals.size < 1:
            raise InvalidArgumentError("HourlySeries needs a non-empty 1-d sequence of values")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("HourlySeries values must be finite")
        if self.unit not in UNITS:
            raise InvalidArgumentError(f"unknown unit {self.unit!r}; expected one of {UNITS}")
        start = self.start_time
        if start.tzinfo is None:
            start = start.replace(tzinfo=timezone.utc)
        object.__setattr__(self, "start_time", start)
        object.__setattr__(self, "values", vals)

    def __len__(self) -> int:
        return self.values.size

    def __eq__(self, other) -> bool:
        if not isinstance(other, HourlySeries):
            return NotImplemented
        return (
            self.start_time == other.start_time
            and self.unit == other.unit
            and self.values.shape == other.values.shape
            and bool(np.all(self.values == other.values))
        )

    __hash__ = None

    @property
    def end_time(self) -> datetime:
        """Timestamp of the hour after the last value."""
        return self.start_time + timedelta(hours=len(self))

    def timestamps(self) -> list[datetime]:
        return [self.start_time + timedelta(hours=i) for i in range(len(self))]

    def slice(self, start: int, stop: int) -> "HourlySeries":
        return HourlySeries(self.start_time + timedelta(hours=start), self.values[start:stop], self.unit)

    def with_values(self, values) -> "HourlySeries":
        return HourlySeries(self.start_time, values, self.unit)


@dataclass(frozen=True)
class BatterySpec:
    s_min: float
    s_max: float
    eta: float
    s_init: float

    def __post_init__(self):
        for name in ("s_min", "s_max", "eta", "s_init"):
            if not math.isfinite(getattr(self, name)):
                raise InvalidArgumentError(f"battery {name} must be finite")
        if not 0 <= self.s_min < self.s_max:
            raise InvalidArgumentError("battery bounds must satisfy 0 <= s_min < s_max")
        if not self.s_min <= self.s_init <= self.s_max:
            raise InvalidArgumentError("battery s_init must lie within [s_min, s_max]")
        if not 0 < self.eta <= 1:
            raise InvalidArgumentError("battery eta must lie in (0, 1]")

    def with_initial(self, s_init: float) -> "BatterySpec":
        return BatterySpec(self.s_min, self.s_max, self.eta, s_init)

    @classmethod
    def from_capacity(cls, capacity: float, eta: float = 0.9, lower: float = 0.1,
                      upper: float = 0.9, initial: float = 0.5) -> "BatterySpec":
        """Bounds given as fractions of the nameplate capacity."""
        return cls(lower * capacity, upper * capacity, eta, initial * capacity)


@dataclass(frozen=True)
class UnitSpec:
    id: str
    battery: BatterySpec
    pv_history: HourlySeries
    demand_history: HourlySeries

    def __post_init__(self):
        pv, dem = self.pv_history, self.demand_history
        if pv.start_time != dem.start_time or len(pv) != len(dem):
            raise InvalidArgumentError(f"unit {self.id}: PV and demand histories cover different ranges")
        if len(pv) % HOURS:
            raise InvalidArgumentError(f"unit {self.id}: history length {len(pv)} is not a multiple of 24")
        if np.any(pv.values < 0) or np.any(dem.values < 0):
            raise InvalidArgumentError(f"unit {self.id}: PV and demand must be non-negative")


@dataclass(frozen=True)
class AggregatorSpec:
    battery: BatterySpec
    c_max: float
    alpha: float
    beta: float
    n_units: int = 1

    def __post_init__(self):
        if not (self.alpha >= 0 and self.beta >= 0):
            raise InvalidArgumentError("alpha and beta must be non-negative")
        if not self.c_max > 0:
            raise InvalidArgumentError("c_max must be positive")
        if self.n_units < 1:
            raise InvalidArgumentError("n_units must be at least 1")


@dataclass(frozen=True)
class BidSchedule:
    """Day-ahead commitments in kW, positive means selling."""

    commitments: np.ndarray
    c_max: float = math.inf

    def __post_init__(self):
        c = _frozen_array(self.commitments)
        if c.shape != (HOURS,):
            raise InvalidArgumentError("a bid schedule holds exactly 24 commitments")
        if not np.all(np.isfinite(c)):
            raise InvalidArgumentError("commitments must be finite")
        # solver output may overshoot the cap by its tolerance
        if np.any(np.abs(c) > self.c_max * (1 + 1e-9) + 1e-6):
            raise InvalidArgumentError("commitment exceeds c_max")
        object.__setattr__(self, "commitments", c)

    def __getitem__(self, hour_index: int) -> float:
        return float(self.commitments[hour_index])


def battery_step(s: float, c: float, v: float, d: float, x: float, eta: float) -> float:
    """Storage at the start of the next hour: ``s + eta * (-c + v - d - x)``.

    No clamping is applied; keeping the state within bounds is the
    optimizer's responsibility.
    """
    args = (s, c, v, d, x, eta)
    if not all(math.isfinite(a) for a in args):
        raise InvalidArgumentError("battery_step inputs must be finite")
    if not 0 < eta <= 1:
        raise InvalidArgumentError("eta must lie in (0, 1]")
    return s + eta * (-c + v - d - x)


def aggregate_units(units: Sequence[UnitSpec], alpha: float, beta: float,
                    c_max: float | None = None, pv_peak: float = 1.0):
    """Merge units into one virtual battery with summed PV and demand.

    Storage bounds, initial storage, PV and demand add up element-wise.
    The degradation coefficient is applied per battery, so the aggregate
    carries ``alpha / n``: an aggregate swing split evenly over ``n``
    identical batteries wears them by ``n * alpha * (swing / n)**2``.
    ``c_max`` defaults to ``n * 2 * pv_peak``.

    Returns ``(AggregatorSpec, pv HourlySeries, demand HourlySeries)``.
    """
    if not units:
        raise InvalidArgumentError("cannot aggregate an empty list of units")
    first = units[0]
    for u in units[1:]:
        if (u.pv_history.start_time != first.pv_history.start_time
                or len(u.pv_history) != len(first.pv_history)):
            raise InvalidArgumentError(f"unit {u.id} history range differs from unit {first.id}")
        if u.battery.eta != first.battery.eta:
            raise InvalidArgumentError("units with different charge efficiencies cannot be aggregated")
    n = len(units)
    battery = BatterySpec(
        s_min=sum(u.battery.s_min for u in units),
        s_max=sum(u.battery.s_max for u in units),
        eta=first.battery.eta,
        s_init=sum(u.battery.s_init for u in units),
    )
    if c_max is None:
        c_max = n * 2.0 * pv_peak
    spec = AggregatorSpec(battery=battery, c_max=c_max, alpha=alpha / n, beta=beta, n_units=n)
    pv = first.pv_history.with_values(np.sum([u.pv_history.values for u in units], axis=0))
    demand = first.demand_history.with_values(np.sum([u.demand_history.values for u in units], axis=0))
    return spec, pv, demand


@dataclass(frozen=True)
class CostBreakdown:
    """Realized cost of one day split into its four terms (currency)."""

    da_revenue: float
    rt_revenue: float
    degradation: float
    network: float
    total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "total", -self.da_revenue - self.rt_revenue + self.degradation + self.network)

    def __add__(self, other: "CostBreakdown") -> "CostBreakdown":
        return CostBreakdown(
            self.da_revenue + other.da_revenue,
            self.rt_revenue + other.rt_revenue,
            self.degradation + other.degradation,
            self.network + other.network,
        )

    def as_dict(self) -> dict:
        return {
            "total": self.total,
            "da_revenue": self.da_revenue,
            "rt_revenue": self.rt_revenue,
            "degradation": self.degradation,
            "network": self.network,
        }


ZERO_COST = CostBreakdown(0.0, 0.0, 0.0, 0.0)


def _as_values(series) -> np.ndarray:
    if isinstance(series, HourlySeries):
        return series.values
    return np.asarray(series, dtype=float)


def realized_cost(schedule: BidSchedule | Sequence[float], rt_bids, rt_prices, da_prices,
                  storage_traj, alpha: float, beta: float) -> CostBreakdown:
    """Settle a day at realized prices.

    total = -sum(pD*c) - sum(pR*x) + alpha*sum(diff(s)**2) + beta*sum(|c + x|)
    """
    c = schedule.commitments if isinstance(schedule, BidSchedule) else np.asarray(schedule, dtype=float)
    x = np.asarray(rt_bids, dtype=float)
    p_rt = _as_values(rt_prices)
    p_da = _as_values(da_prices)
    s = np.asarray(storage_traj, dtype=float)
    n = c.size
    if not (x.size == p_rt.size == p_da.size == n):
        raise InvalidArgumentError("commitments, RT bids and price series must have equal lengths")
    if s.size != n + 1:
        raise InvalidArgumentError(f"storage trajectory needs {n + 1} entries, got {s.size}")
    return CostBreakdown(
        da_revenue=float(np.dot(p_da, c)),
        rt_revenue=float(np.dot(p_rt, x)),
        degradation=float(alpha * np.sum(np.diff(s) ** 2)),
        network=float(beta * np.sum(np.abs(c + x))),
    )
