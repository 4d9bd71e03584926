"""Independent reference computations shared by the unit and acceptance tests."""

import itertools

import numpy as np

from bessagg.core import AggregatorSpec, BatterySpec
from bessagg.scenario import JointScenarioSet


def grid(lo, hi, step):
    n = int(round((hi - lo) / step))
    return lo + step * np.arange(n + 1)


def random_da_instance(rng, hours, n_scen):
    """Tiny day-ahead instance whose feasible set is coarse enough to enumerate."""
    s_min = float(rng.uniform(0.5, 1.0))
    width = 0.4 if hours <= 2 else 0.2
    battery = BatterySpec(s_min, s_min + width, float(rng.uniform(0.8, 1.0)),
                          s_min + 0.01 * int(rng.integers(0, round(width * 100) + 1)))
    c_max = 0.3 if hours <= 2 else 0.1
    agg = AggregatorSpec(battery, c_max, float(rng.uniform(0.0, 1.0)), float(rng.uniform(0.0, 0.1)))
    p_da = rng.uniform(0.0, 1.0, hours)
    comps = {"rt_price": rng.uniform(0.0, 1.0, (n_scen, hours)),
             "pv": rng.uniform(0.0, 0.3, (n_scen, hours)),
             "demand": rng.uniform(0.0, 0.3, (n_scen, hours))}
    probs = rng.dirichlet(np.ones(n_scen)) if n_scen > 1 else np.ones(1)
    return agg, p_da, JointScenarioSet(comps, probs, tuple(range(1, hours + 1)))


def grid_search_da(agg, p_da, joint, step=0.01):
    """Exhaustive minimum of the day-ahead objective over a 0.01 lattice.

    Commitments range over a lattice in [-c_max, c_max]. Each scenario's
    recourse is enumerated through its storage path on a lattice in
    [s_min, s_max]; the trade x then follows from the battery balance,
    which keeps every enumerated point exactly feasible.
    """
    bat = agg.battery
    H = p_da.size
    c_axis = grid(-agg.c_max, agg.c_max, step)
    s_axis = grid(bat.s_min, bat.s_max, step)
    cs = np.array(list(itertools.product(c_axis, repeat=H)))
    paths = np.array(list(itertools.product(s_axis, repeat=H)))
    full = np.hstack([np.full((paths.shape[0], 1), bat.s_init), paths])
    swing = np.diff(full, axis=1)
    total = -(cs @ p_da)
    for k in range(len(joint)):
        pr, v, d = joint["rt_price"][k], joint["pv"][k], joint["demand"][k]
        # x = (s_t - s_{t+1}) / eta - c + v - d, so c + x does not depend on c
        net = -swing / bat.eta + v - d
        path_cost = -(net @ pr) + agg.alpha * np.sum(swing ** 2, axis=1) + agg.beta * np.sum(np.abs(net), axis=1)
        best = np.empty(cs.shape[0])
        for lo in range(0, cs.shape[0], 512):
            chunk = cs[lo:lo + 512]
            best[lo:lo + 512] = np.min(path_cost[None, :] + (chunk @ pr)[:, None], axis=1)
        total = total + joint.probabilities[k] * best
    return float(total.min())
