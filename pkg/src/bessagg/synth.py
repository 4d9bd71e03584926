"""Synthetic households and market prices standing in for measured data."""

from __future__ import annotations

from dataclasses import dataclass
from datetime import datetime, timezone

import numpy as np

from .core import HOURS, BatterySpec, HourlySeries, InvalidArgumentError, UnitSpec
from .errormodel import make_rng
from .sim import Dataset

MIN_DAYS = 40
DEFAULT_START = datetime(2011, 7, 21, tzinfo=timezone.utc)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_units: int = 6
    n_days: int = 210
    start: datetime = DEFAULT_START
    pv_peak: float = 1.0
    demand_level: float = 0.6
    capacity: float = 5.0
    eta: float = 0.9
    price_level: float = 0.20
    rt_noise: float = 0.02
    spike_prob: float = 0.04
    spike_mean: float = 0.10
    rt_premium: float = 0.0

    def __post_init__(self):
        if self.n_units < 1:
            raise InvalidArgumentError("n_units must be at least 1")
        if self.n_days < MIN_DAYS:
            raise InvalidArgumentError(f"n_days must be at least {MIN_DAYS} (training plus evaluation)")


def _day_of_year(spec: SynthSpec) -> np.ndarray:
    first = spec.start.timetuple().tm_yday
    return (first - 1 + np.arange(spec.n_days)) % 365 + 1


def solar_elevation(doy: np.ndarray) -> np.ndarray:
    """Daily sine arc between sunrise and sunset, negative at night; shape (days, 24)."""
    day_len = 12.0 + 3.5 * np.cos(2 * np.pi * (doy - 172) / 365.0)
    sunrise = 12.5 - day_len / 2
    hour_mid = np.arange(HOURS) + 0.5
    phase = (hour_mid[None, :] - sunrise[:, None]) / day_len[:, None]
    return np.where((phase > 0) & (phase < 1), np.sin(np.pi * phase), -1.0)


def pv_profile(spec: SynthSpec, scale: float, rng: np.random.Generator) -> np.ndarray:
    doy = _day_of_year(spec)
    elev = solar_elevation(doy)
    season = 0.75 + 0.25 * np.cos(2 * np.pi * (doy - 172) / 365.0)
    cloud = rng.lognormal(-0.08, 0.4, spec.n_days)
    jitter = rng.lognormal(-0.02, 0.2, elev.shape)
    raw = 1.25 * elev * season[:, None] * cloud[:, None] * jitter
    pv = np.clip(raw, 0.0, 1.0) * spec.pv_peak * scale
    pv[elev <= 0] = 0.0
    return pv.ravel()


def demand_profile(spec: SynthSpec, level: float, rng: np.random.Generator, phi: float = 0.8,
                   sigma: float = 0.08) -> np.ndarray:
    h = np.arange(HOURS) + 0.5
    shape = 0.5 + 0.8 * np.exp(-0.5 * ((h - 7.5) / 1.3) ** 2) + 1.2 * np.exp(-0.5 * ((h - 19.5) / 1.8) ** 2)
    shape = shape / shape.mean() * level
    n = spec.n_days * HOURS
    shocks = rng.normal(0.0, sigma * level, n)
    noise = np.zeros(n)
    for i in range(1, n):
        noise[i] = phi * noise[i - 1] + shocks[i]
    return np.maximum(np.tile(shape, spec.n_days) + noise, 0.0)


def price_profiles(spec: SynthSpec, rng: np.random.Generator):
    """Day-ahead shape with an early-morning valley and an evening peak.

    Real-time prices add mean-zero AR(1) noise and rare centred spikes.
    A non-zero ``rt_premium`` shifts real time below day ahead at midday
    and above it in the evening; it is off by default.
    """
    h = np.arange(HOURS) + 0.5
    shape = (1.0
             - 0.35 * np.exp(-0.5 * ((h - 3.5) / 2.0) ** 2)
             + 0.15 * np.exp(-0.5 * ((h - 9.0) / 2.0) ** 2)
             + 0.55 * np.exp(-0.5 * ((h - 18.5) / 1.6) ** 2))
    day_level = 1.0 + 0.06 * rng.standard_normal(spec.n_days)
    da = spec.price_level * shape[None, :] * day_level[:, None]
    n = da.size
    shocks = rng.normal(0.0, spec.rt_noise, n)
    noise = np.zeros(n)
    for i in range(1, n):
        noise[i] = 0.7 * noise[i - 1] + shocks[i]
    spikes = (rng.random(n) < spec.spike_prob) * rng.exponential(spec.spike_mean, n)
    premium = spec.rt_premium * (np.exp(-0.5 * ((h - 18.5) / 1.6) ** 2) - np.exp(-0.5 * ((h - 12.5) / 2.0) ** 2))
    # spikes are centred so they add variance but no bias
    rt = da.ravel() + np.tile(premium, spec.n_days) + noise + spikes - spec.spike_prob * spec.spike_mean
    return da.ravel(), rt


def generate(spec: SynthSpec = SynthSpec()) -> Dataset:
    da, rt = price_profiles(spec, make_rng((spec.seed, 1)))
    units = []
    for i in range(spec.n_units):
        urng = make_rng((spec.seed, 2, i))
        scale = float(urng.uniform(0.6, 1.4))
        level = spec.demand_level * float(urng.uniform(0.7, 1.3))
        pv = pv_profile(spec, scale, urng)
        dem = demand_profile(spec, level, urng)
        units.append(UnitSpec(
            id=f"unit{i + 1}",
            battery=BatterySpec.from_capacity(spec.capacity, eta=spec.eta),
            pv_history=HourlySeries(spec.start, pv, "kW"),
            demand_history=HourlySeries(spec.start, dem, "kW"),
        ))
    return Dataset(tuple(units), HourlySeries(spec.start, da, "currency/kWh"),
                   HourlySeries(spec.start, rt, "currency/kWh"))
