"""Seasonal ARIMA fitted by conditional sum of squares, and day-ahead replay."""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from datetime import timedelta

import numpy as np
from scipy import optimize, signal

from .core import HOURS, HourlySeries, InvalidArgumentError

logger = logging.getLogger(__name__)

MAX_ORDER = 4
MIN_REPLAY_DAYS = 30


@dataclass(frozen=True)
class SarimaOrders:
    p: int = 1
    d: int = 0
    q: int = 1
    P: int = 1
    D: int = 1
    Q: int = 1
    s: int = 24

    def __post_init__(self):
        orders = (self.p, self.d, self.q, self.P, self.D, self.Q)
        if any(int(o) != o or o < 0 for o in orders):
            raise InvalidArgumentError("SARIMA orders must be non-negative integers")
        if any(o > MAX_ORDER for o in orders):
            raise InvalidArgumentError(f"SARIMA orders above {MAX_ORDER} are not supported")
        if self.s < 1:
            raise InvalidArgumentError("season length must be at least 1")
        if self.d + self.D > 2:
            raise InvalidArgumentError("total differencing d + D must not exceed 2")

    @property
    def n_params(self) -> int:
        """Coefficients plus the intercept."""
        return self.p + self.q + self.P + self.Q + 1

    @property
    def diff_lags(self) -> int:
        return self.d + self.D * self.s

    @property
    def ar_lags(self) -> int:
        return self.p + self.P * self.s

    @property
    def ma_lags(self) -> int:
        return self.q + self.Q * self.s

    @classmethod
    def parse(cls, text: str) -> "SarimaOrders":
        """Parse ``"p,d,q,P,D,Q,s"`` or the printed form ``"(p,d,q)(P,D,Q)_s"``."""
        if re.search(r"[^\d\s,()_]", str(text)):
            raise InvalidArgumentError(f"SARIMA orders may only contain integers, got {text!r}")
        parts = [int(v) for v in re.findall(r"\d+", str(text))]
        if len(parts) != 7:
            raise InvalidArgumentError(f"expected 7 comma-separated SARIMA orders, got {text!r}")
        return cls(*parts)

    def __str__(self) -> str:
        return f"({self.p},{self.d},{self.q})({self.P},{self.D},{self.Q})_{self.s}"


@dataclass(frozen=True)
class SarimaModel:
    orders: SarimaOrders
    ar_coeffs: np.ndarray
    ma_coeffs: np.ndarray
    seasonal_ar_coeffs: np.ndarray
    seasonal_ma_coeffs: np.ndarray
    intercept: float
    residual_variance: float
    training_tail: np.ndarray
    converged: bool = True
    n_iter: int = 0

    def __post_init__(self):
        o = self.orders
        for name, size in (("ar_coeffs", o.p), ("ma_coeffs", o.q), ("seasonal_ar_coeffs", o.P),
                           ("seasonal_ma_coeffs", o.Q)):
            arr = np.array(getattr(self, name), dtype=float).ravel()
            if arr.size != size:
                raise InvalidArgumentError(f"{name} has {arr.size} entries, orders declare {size}")
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if not self.residual_variance >= 0:
            raise InvalidArgumentError("residual_variance must be non-negative")

    def ar_polynomial(self) -> np.ndarray:
        """Full lag polynomial ``phi(B) * Phi(B^s)`` as coefficients of B^0..B^k."""
        return _ar_poly(self.ar_coeffs, self.seasonal_ar_coeffs, self.orders.s)

    def ma_polynomial(self) -> np.ndarray:
        return _ma_poly(self.ma_coeffs, self.seasonal_ma_coeffs, self.orders.s)

    @property
    def max_lag(self) -> int:
        o = self.orders
        return o.diff_lags + max(o.ar_lags, o.ma_lags)


def _seasonal(poly: np.ndarray, s: int) -> np.ndarray:
    out = np.zeros((poly.size - 1) * s + 1)
    out[::s] = poly
    return out


def _ar_poly(phi, seasonal_phi, s) -> np.ndarray:
    return np.convolve(np.r_[1.0, -np.asarray(phi)], _seasonal(np.r_[1.0, -np.asarray(seasonal_phi)], s))


def _ma_poly(theta, seasonal_theta, s) -> np.ndarray:
    return np.convolve(np.r_[1.0, np.asarray(theta)], _seasonal(np.r_[1.0, np.asarray(seasonal_theta)], s))


def _diff_poly(d: int, D: int, s: int) -> np.ndarray:
    poly = np.array([1.0])
    for _ in range(d):
        poly = np.convolve(poly, [1.0, -1.0])
    for _ in range(D):
        poly = np.convolve(poly, _seasonal(np.array([1.0, -1.0]), s))
    return poly


def _difference_values(y: np.ndarray, d: int, D: int, s: int) -> np.ndarray:
    w = np.asarray(y, dtype=float)
    for _ in range(d):
        w = w[1:] - w[:-1]
    for _ in range(D):
        w = w[s:] - w[:-s]
    return w


def difference(series: HourlySeries, d: int, D: int, s: int) -> HourlySeries:
    """Ordinary differencing ``d`` times, then seasonal (lag ``s``) ``D`` times."""
    consumed = d + D * s
    if len(series) <= consumed:
        raise InvalidArgumentError(f"series of length {len(series)} too short for d={d}, D={D}, s={s}")
    return HourlySeries(series.start_time + timedelta(hours=consumed),
                        _difference_values(series.values, d, D, s), series.unit)


def undifference(diffed: np.ndarray, prefix: np.ndarray, d: int, D: int, s: int) -> np.ndarray:
    """Invert :func:`difference` given the ``d + D*s`` consumed leading values."""
    delta = _diff_poly(d, D, s)
    k = delta.size - 1
    prefix = np.asarray(prefix, dtype=float)
    if prefix.size != k:
        raise InvalidArgumentError(f"prefix must hold exactly {k} values")
    y = np.concatenate([prefix, np.zeros(len(diffed))])
    for t in range(k, y.size):
        y[t] = diffed[t - k] - np.dot(delta[1:], y[t - 1::-1][:k]) if k else diffed[t]
    return y


def pacf_to_coeffs(raw: np.ndarray) -> np.ndarray:
    """Map unconstrained values to a stationary AR coefficient vector.

    tanh gives partial autocorrelations in (-1, 1); the Durbin-Levinson
    recursion turns them into coefficients of a stationary polynomial.
    """
    r = np.tanh(np.asarray(raw, dtype=float))
    phi = np.zeros(0)
    for m, rho in enumerate(r):
        phi = np.r_[phi - rho * phi[::-1], rho] if m else np.array([rho])
    return phi


def _transform_jacobian(raw: np.ndarray, h: float = 1e-6) -> np.ndarray:
    k = raw.size
    jac = np.zeros((k, k))
    for j in range(k):
        step = np.zeros(k)
        step[j] = h
        jac[:, j] = (pacf_to_coeffs(raw + step) - pacf_to_coeffs(raw - step)) / (2 * h)
    return jac


class _CssObjective:
    """Scaled conditional sum of squares and its analytic gradient."""

    def __init__(self, w: np.ndarray, orders: SarimaOrders):
        self.w = w
        self.o = orders
        self.start = orders.ar_lags
        self.n_eff = w.size - self.start
        self.center = float(np.mean(w))
        spread = float(np.std(w))
        self.spread = spread if spread > 0 else 1.0
        self.scale = self.spread ** 2

    def unpack(self, theta: np.ndarray):
        o = self.o
        parts = np.split(theta[:-1], np.cumsum([o.p, o.q, o.P]))
        phi = pacf_to_coeffs(parts[0])
        ma = -pacf_to_coeffs(parts[1])
        sphi = pacf_to_coeffs(parts[2])
        sma = -pacf_to_coeffs(parts[3])
        mu = self.center + self.spread * theta[-1]
        return phi, ma, sphi, sma, mu

    def residuals(self, phi, ma, sphi, sma, mu):
        ar_full = _ar_poly(phi, sphi, self.o.s)
        ma_full = _ma_poly(ma, sma, self.o.s)
        dev = self.w - mu
        return signal.lfilter(ar_full, ma_full, dev), ar_full, ma_full, dev

    def __call__(self, theta: np.ndarray):
        o = self.o
        phi, ma, sphi, sma, mu = self.unpack(theta)
        e, ar_full, ma_full, dev = self.residuals(phi, ma, sphi, sma, mu)
        tail = e[self.start:]
        value = float(np.dot(tail, tail)) / (self.n_eff * self.scale)

        # de/d(ar_k) = shift_k(dev / ma);  de/d(ma_k) = -shift_k(e / ma)
        g_dev = signal.lfilter([1.0], ma_full, dev)
        g_e = signal.lfilter([1.0], ma_full, e)
        coef = 2.0 / (self.n_eff * self.scale)

        def lag_grad(series, n_lags):
            out = np.empty(n_lags + 1)
            for k in range(n_lags + 1):
                out[k] = np.dot(tail, series[self.start - k:series.size - k])
            return out

        grad_ar_full = coef * lag_grad(g_dev, ar_full.size - 1)
        grad_ma_full = -coef * lag_grad(g_e, ma_full.size - 1)

        s = o.s
        ns_ar = np.r_[1.0, -phi]
        s_ar = _seasonal(np.r_[1.0, -sphi], s)
        ns_ma = np.r_[1.0, ma]
        s_ma = _seasonal(np.r_[1.0, sma], s)
        # d conv(a, b)[k] / d a[i] = b[k - i]
        g_ns_ar = np.correlate(grad_ar_full, s_ar, mode="valid")[: ns_ar.size]
        g_s_ar = np.correlate(grad_ar_full, ns_ar, mode="valid")[: s_ar.size]
        g_ns_ma = np.correlate(grad_ma_full, s_ma, mode="valid")[: ns_ma.size]
        g_s_ma = np.correlate(grad_ma_full, ns_ma, mode="valid")[: s_ma.size]

        parts = np.split(theta[:-1], np.cumsum([o.p, o.q, o.P]))
        grads = []
        # AR polynomials store -coef, MA polynomials +coef; MA coef = -pacf(raw)
        for raw, g_poly, poly_sign, coef_sign, stride in (
            (parts[0], g_ns_ar, -1.0, 1.0, 1),
            (parts[1], g_ns_ma, 1.0, -1.0, 1),
            (parts[2], g_s_ar, -1.0, 1.0, s),
            (parts[3], g_s_ma, 1.0, -1.0, s),
        ):
            if raw.size == 0:
                grads.append(np.zeros(0))
                continue
            g_coef = poly_sign * g_poly[stride::stride][: raw.size]
            grads.append(coef_sign * (_transform_jacobian(raw).T @ g_coef))
        # intercept: de/dmu = -(ar(1)/ma) applied to ones
        de_dmu = -signal.lfilter(ar_full, ma_full, np.ones_like(self.w))
        g_mu = coef * np.dot(tail, de_dmu[self.start:]) * self.spread
        return value, np.concatenate(grads + [np.array([g_mu])])


def fit(series: HourlySeries | np.ndarray, orders: SarimaOrders, gtol: float = 1e-6,
        maxiter: int = 500) -> SarimaModel:
    """Fit a multiplicative SARIMA by conditional sum of squares.

    Coefficients are kept stationary/invertible through a partial
    autocorrelation reparameterization. Non-convergence is reported on
    the returned model rather than raised.
    """
    y = series.values if isinstance(series, HourlySeries) else np.asarray(series, dtype=float)
    if not np.all(np.isfinite(y)):
        raise InvalidArgumentError("series contains non-finite values")
    need = 10 * orders.n_params
    if y.size < need:
        raise InvalidArgumentError(f"series length {y.size} below the minimum {need} for {orders}")
    if orders.D > 0 and y.size < 3 * orders.s:
        raise InvalidArgumentError("seasonal differencing needs at least three full seasons")
    w = _difference_values(y, orders.d, orders.D, orders.s)
    if w.size <= orders.ar_lags + orders.n_params:
        raise InvalidArgumentError("series too short after differencing")

    objective = _CssObjective(w, orders)
    theta0 = np.zeros(orders.n_params)
    res = optimize.minimize(objective, theta0, jac=True, method="BFGS",
                            options={"gtol": gtol, "maxiter": maxiter})
    grad_norm = float(np.max(np.abs(res.jac))) if res.jac is not None else np.inf
    converged = bool(res.success or grad_norm < gtol)
    if not converged:
        logger.warning("SARIMA %s fit stopped without convergence: %s (|grad|=%.2e)",
                       orders, res.message, grad_norm)
    phi, ma, sphi, sma, mu = objective.unpack(res.x)
    e = objective.residuals(phi, ma, sphi, sma, mu)[0][objective.start:]
    tail_len = orders.diff_lags + max(orders.ar_lags, orders.ma_lags)
    return SarimaModel(
        orders=orders,
        ar_coeffs=phi,
        ma_coeffs=ma,
        seasonal_ar_coeffs=sphi,
        seasonal_ma_coeffs=sma,
        intercept=float(mu),
        residual_variance=float(np.mean(e ** 2)) if e.size else 0.0,
        training_tail=np.array(y[-tail_len:] if tail_len else y[-1:]),
        converged=converged,
        n_iter=int(res.nit),
    )


def _forecast_from_origins(model: SarimaModel, y: np.ndarray, origins: np.ndarray, horizon: int) -> np.ndarray:
    """Forecast ``y[o:o+horizon]`` from data ``y[:o]`` for each origin ``o``."""
    o = model.orders
    ar = model.ar_polynomial()
    ma = model.ma_polynomial()
    delta = _diff_poly(o.d, o.D, o.s)
    n_ar, n_ma, n_d = ar.size - 1, ma.size - 1, delta.size - 1
    w = _difference_values(y, o.d, o.D, o.s)
    dev = w - model.intercept
    e = signal.lfilter(ar, ma, dev)
    pad = max(n_ar, n_ma)
    dev_p = np.r_[np.zeros(pad), dev]
    e_p = np.r_[np.zeros(pad), e]

    n_o = origins.size
    wi = origins - n_d + pad  # index into the padded arrays of the first forecast step
    dev_win = np.zeros((n_o, n_ar + horizon))
    e_win = np.zeros((n_o, n_ma + horizon))
    y_win = np.zeros((n_o, n_d + horizon))
    for k in range(n_ar):
        dev_win[:, k] = dev_p[wi - n_ar + k]
    for k in range(n_ma):
        e_win[:, k] = e_p[wi - n_ma + k]
    for k in range(n_d):
        y_win[:, k] = y[origins - n_d + k]

    ar_rev = ar[1:][::-1]
    ma_rev = ma[1:][::-1]
    d_rev = delta[1:][::-1]
    for h in range(horizon):
        step = np.zeros(n_o)
        if n_ar:
            step -= dev_win[:, h:h + n_ar] @ ar_rev
        if n_ma:
            step += e_win[:, h:h + n_ma] @ ma_rev
        dev_win[:, n_ar + h] = step
        w_next = step + model.intercept
        y_win[:, n_d + h] = w_next - (y_win[:, h:h + n_d] @ d_rev if n_d else 0.0)
    return y_win[:, n_d:]


def forecast(model: SarimaModel, history: HourlySeries | np.ndarray, horizon: int = HOURS):
    """Iterated one-step expectations with future shocks set to zero."""
    y = history.values if isinstance(history, HourlySeries) else np.asarray(history, dtype=float)
    if horizon < 1:
        raise InvalidArgumentError("forecast horizon must be at least 1")
    if y.size < max(model.max_lag, 1):
        raise InvalidArgumentError(f"history of {y.size} values shorter than the model's maximum lag {model.max_lag}")
    values = _forecast_from_origins(model, y, np.array([y.size]), horizon)[0]
    if isinstance(history, HourlySeries):
        return HourlySeries(history.end_time, values, history.unit)
    return values


def first_replay_day(model: SarimaModel) -> int:
    o = model.orders
    return max(1, -(-(o.diff_lags + o.ar_lags) // HOURS))


def residual_matrix(model: SarimaModel, history: HourlySeries | np.ndarray) -> np.ndarray:
    """Day-ahead replay errors, one row per day, one column per hour.

    Each day is forecast from data up to the preceding midnight; the
    entry is actual minus forecast. Days without enough lagged data
    for the model are skipped.
    """
    y = history.values if isinstance(history, HourlySeries) else np.asarray(history, dtype=float)
    if y.size % HOURS:
        raise InvalidArgumentError("history length must be a multiple of 24")
    n_days = y.size // HOURS
    if n_days < MIN_REPLAY_DAYS:
        raise InvalidArgumentError(f"residual matrix needs at least {MIN_REPLAY_DAYS} days of history, got {n_days}")
    first = first_replay_day(model)
    origins = np.arange(first, n_days) * HOURS
    fc = _forecast_from_origins(model, y, origins, HOURS)
    actual = y[origins[:, None] + np.arange(HOURS)]
    return actual - fc
