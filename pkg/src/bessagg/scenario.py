"""Scenario generation, simultaneous backward reduction and joint sets."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import HOURS, InvalidArgumentError
from .errormodel import GaussianErrorModel, condition, sample

QUANTITIES = ("rt_price", "pv", "demand")
NON_NEGATIVE = frozenset({"pv", "demand"})
PROB_TOL = 1e-9


class EmptyHorizonError(InvalidArgumentError):
    """No hours remain to generate scenarios for."""


@dataclass(frozen=True)
class Scenario:
    values: np.ndarray
    probability: float

    def __post_init__(self):
        vals = np.array(self.values, dtype=float).ravel()
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("scenario values must be finite")
        if not self.probability >= 0:
            raise InvalidArgumentError("scenario probability must be non-negative")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)


@dataclass(frozen=True)
class ScenarioSet:
    """Probability-weighted trajectories of one quantity, one row per scenario."""

    values: np.ndarray
    probabilities: np.ndarray
    quantity: str
    hours: tuple = ()

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.ndim == 1:
            vals = vals[:, None]
        probs = np.array(self.probabilities, dtype=float).ravel()
        if vals.ndim != 2 or vals.shape[0] < 1:
            raise InvalidArgumentError("a scenario set needs at least one scenario")
        if probs.size != vals.shape[0]:
            raise InvalidArgumentError("one probability per scenario is required")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > PROB_TOL:
            raise InvalidArgumentError("scenario probabilities must be non-negative and sum to 1")
        if not np.all(np.isfinite(vals)):
            raise InvalidArgumentError("scenario values must be finite")
        if self.quantity not in QUANTITIES:
            raise InvalidArgumentError(f"unknown quantity {self.quantity!r}")
        hours = tuple(int(h) for h in self.hours) if self.hours else tuple(range(HOURS - vals.shape[1] + 1, HOURS + 1))
        if len(hours) != vals.shape[1]:
            raise InvalidArgumentError("hour labels do not match the scenario horizon")
        vals.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "probabilities", probs)
        object.__setattr__(self, "hours", hours)

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def __iter__(self):
        for v, p in zip(self.values, self.probabilities):
            yield Scenario(v, float(p))

    @classmethod
    def from_scenarios(cls, scenarios: Sequence[Scenario], quantity: str, hours=()) -> "ScenarioSet":
        if not scenarios:
            raise InvalidArgumentError("a scenario set needs at least one scenario")
        lengths = {s.values.size for s in scenarios}
        if len(lengths) != 1:
            raise InvalidArgumentError("scenarios have different horizons")
        return cls(np.vstack([s.values for s in scenarios]), [s.probability for s in scenarios], quantity, hours)

    def expected(self) -> np.ndarray:
        return self.probabilities @ self.values


@dataclass(frozen=True)
class JointScenarioSet:
    """Cartesian product of independent per-quantity scenario sets."""

    components: dict
    probabilities: np.ndarray
    hours: tuple

    def __len__(self) -> int:
        return self.probabilities.size

    @property
    def horizon(self) -> int:
        return len(self.hours)

    def __getitem__(self, quantity: str) -> np.ndarray:
        return self.components[quantity]


def _clamp(values: np.ndarray, quantity: str) -> np.ndarray:
    return np.maximum(values, 0.0) if quantity in NON_NEGATIVE else values


def generate_da(point_forecast, err: GaussianErrorModel, n: int, seed, quantity: str = "rt_price") -> ScenarioSet:
    """Forecast plus ``n`` sampled error vectors, each with probability 1/n."""
    fc = np.asarray(point_forecast, dtype=float).ravel()
    if err.dim != HOURS or fc.size != HOURS:
        raise InvalidArgumentError("day-ahead generation needs a 24-hour forecast and error model")
    draws = sample(err, n, seed)
    return ScenarioSet(_clamp(fc + draws, quantity), np.full(n, 1.0 / n), quantity, err.hour_labels)


def generate_rt(point_forecast, err: GaussianErrorModel, realized, n: int, seed,
                quantity: str = "rt_price") -> ScenarioSet:
    """Scenarios for hours t+1..24 given realizations of hours 1..t.

    The realized forecast errors condition the day-ahead error model;
    the SARIMA forecast itself is reused unchanged.
    """
    fc = np.asarray(point_forecast, dtype=float).ravel()
    obs = np.asarray(realized, dtype=float).ravel()
    t = obs.size
    if fc.size != HOURS or err.dim != HOURS:
        raise InvalidArgumentError("real-time generation needs the 24-hour forecast and error model")
    if t >= HOURS:
        raise EmptyHorizonError("no hours remain after hour 24")
    if t < 1:
        raise InvalidArgumentError("at least one realized hour is required")
    observed_hours = err.hour_labels[:t]
    cond = condition(err, observed_hours, obs - fc[:t])
    draws = sample(cond, n, seed)
    return ScenarioSet(_clamp(fc[t:] + draws, quantity), np.full(n, 1.0 / n), quantity, cond.hour_labels)


def distance(a, b) -> float:
    """Squared Euclidean distance between two trajectories."""
    va = a.values if isinstance(a, Scenario) else np.asarray(a, dtype=float)
    vb = b.values if isinstance(b, Scenario) else np.asarray(b, dtype=float)
    if va.shape != vb.shape:
        raise InvalidArgumentError("scenarios have different horizons")
    diff = va - vb
    return float(np.dot(diff, diff))


def distance_matrix(values: np.ndarray) -> np.ndarray:
    diff = values[:, None, :] - values[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def backward_deletion_order(dist: np.ndarray, probs: np.ndarray, n_delete: int) -> list[int]:
    """Greedy deletion sequence; ties resolve to the lowest index."""
    n = probs.size
    deleted = np.zeros(n, dtype=bool)
    order = []
    big = np.inf
    for _ in range(n_delete):
        remaining = ~deleted
        # nearest and second-nearest remaining scenario for every row
        d = np.where(remaining[None, :], dist, big)
        np.fill_diagonal(d, big)
        nearest = np.argmin(d, axis=1)
        d1 = d[np.arange(n), nearest]
        d[np.arange(n), nearest] = big
        d2 = np.min(d, axis=1)
        # cost of deleted rows when candidate j is also removed
        rows = np.flatnonzero(deleted)
        if rows.size:
            base = np.where(nearest[rows][:, None] == np.arange(n)[None, :], d2[rows][:, None], d1[rows][:, None])
            z = probs[rows] @ base
        else:
            z = np.zeros(n)
        # the candidate itself moves to its nearest other remaining scenario
        z = z + probs * d1
        z[deleted] = big
        j = int(np.argmin(z))
        deleted[j] = True
        order.append(j)
    return order


def reduce(scenarios: ScenarioSet, k_preserve: int) -> ScenarioSet:
    """Simultaneous backward reduction down to ``k_preserve`` scenarios.

    Each deleted scenario hands its probability to the nearest
    preserved one. Preserved rows are copied from the input untouched.
    """
    n = len(scenarios)
    if not 1 <= k_preserve <= n:
        raise InvalidArgumentError(f"k_preserve must lie in [1, {n}], got {k_preserve}")
    if k_preserve == n:
        return scenarios
    dist = distance_matrix(scenarios.values)
    probs = scenarios.probabilities
    deleted = backward_deletion_order(dist, probs, n - k_preserve)
    keep = np.setdiff1d(np.arange(n), deleted)
    new_probs = probs[keep].copy()
    for i in deleted:
        new_probs[int(np.argmin(dist[i, keep]))] += probs[i]
    new_probs /= new_probs.sum()
    return ScenarioSet(scenarios.values[keep], new_probs, scenarios.quantity, scenarios.hours)


def transport_cost(dist: np.ndarray, probs: np.ndarray, keep: Sequence[int]) -> float:
    """Probability-weighted distance from dropped scenarios to their nearest kept one."""
    keep = np.asarray(keep, dtype=int)
    dropped = np.setdiff1d(np.arange(probs.size), keep)
    if dropped.size == 0:
        return 0.0
    return float(probs[dropped] @ dist[np.ix_(dropped, keep)].min(axis=1))


def cross_product(sets: Sequence[ScenarioSet]) -> JointScenarioSet:
    """All combinations of the input scenarios with product probabilities."""
    if not sets:
        raise InvalidArgumentError("cross product of no scenario sets")
    horizons = {s.horizon for s in sets}
    if len(horizons) != 1:
        raise InvalidArgumentError("scenario sets have different horizons")
    names = [s.quantity for s in sets]
    if len(set(names)) != len(names):
        raise InvalidArgumentError("each quantity may appear only once in a cross product")
    grids = np.array(list(itertools.product(*[range(len(s)) for s in sets])), dtype=int)
    probs = np.ones(grids.shape[0])
    components = {}
    for col, s in enumerate(sets):
        probs = probs * s.probabilities[grids[:, col]]
        vals = s.values[grids[:, col]]
        vals.setflags(write=False)
        components[s.quantity] = vals
    return JointScenarioSet(components, probs, sets[0].hours)


def single_joint(components: dict, hours: Sequence[int]) -> JointScenarioSet:
    """One certain scenario built from known trajectories."""
    comps = {}
    for name, vals in components.items():
        arr = np.asarray(vals, dtype=float).reshape(1, -1)
        comps[name] = arr
    return JointScenarioSet(comps, np.ones(1), tuple(hours))
