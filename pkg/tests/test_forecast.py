from datetime import datetime, timezone

import numpy as np
import pytest

from bessagg.core import HourlySeries, InvalidArgumentError
from bessagg.forecast import (SarimaModel, SarimaOrders, difference, fit, forecast, pacf_to_coeffs,
                              residual_matrix, undifference)

T0 = datetime(2012, 1, 1, tzinfo=timezone.utc)


def series(values):
    return HourlySeries(T0, values, "kW")


def zero_model(orders, intercept=0.0):
    return SarimaModel(orders, np.zeros(orders.p), np.zeros(orders.q), np.zeros(orders.P), np.zeros(orders.Q),
                       intercept, 0.0, np.zeros(0))


def ar1(n, phi, seed, mean=0.0):
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(n + 200)
    y = np.zeros_like(e)
    for t in range(1, y.size):
        y[t] = phi * y[t - 1] + e[t]
    return y[200:] + mean


def test_orders_validation_and_parse():
    with pytest.raises(InvalidArgumentError):
        SarimaOrders(p=5)
    with pytest.raises(InvalidArgumentError):
        SarimaOrders(d=2, D=1)
    with pytest.raises(InvalidArgumentError):
        SarimaOrders(s=0)
    o = SarimaOrders(2, 1, 0, 1, 0, 1, 12)
    assert SarimaOrders.parse(str(o)) == o
    assert SarimaOrders.parse("1,0,1,1,1,1,24") == SarimaOrders()
    with pytest.raises(InvalidArgumentError):
        SarimaOrders.parse("1,0,1")
    with pytest.raises(InvalidArgumentError):
        SarimaOrders.parse("a,b")


def test_model_coefficient_lengths_checked():
    o = SarimaOrders(1, 0, 0, 0, 0, 0, 24)
    with pytest.raises(InvalidArgumentError):
        SarimaModel(o, np.zeros(2), np.zeros(0), np.zeros(0), np.zeros(0), 0.0, 0.0, np.zeros(0))
    with pytest.raises(InvalidArgumentError):
        SarimaModel(o, np.zeros(1), np.zeros(0), np.zeros(0), np.zeros(0), 0.0, -1.0, np.zeros(0))


def test_difference_examples():
    ramp = series(np.arange(1.0, 50.0))
    out = difference(ramp, 1, 0, 24)
    assert np.all(out.values == 1.0) and len(out) == 48
    periodic = series(np.tile(np.arange(24.0), 4))
    assert np.all(difference(periodic, 0, 1, 24).values == 0.0)
    assert np.all(difference(series(np.full(30, 3.0)), 1, 0, 24).values == 0.0)
    with pytest.raises(InvalidArgumentError):
        difference(series(np.ones(24)), 0, 1, 24)


@pytest.mark.parametrize("d, D", [(1, 0), (0, 1), (1, 1), (2, 0)])
def test_undifference_roundtrip(d, D):
    y = np.random.default_rng(1).normal(size=200).cumsum()
    k = d + D * 24
    w = difference(series(y), d, D, 24).values
    assert np.allclose(undifference(w, y[:k], d, D, 24), y, atol=1e-9)


def test_pacf_transform_is_stationary():
    rng = np.random.default_rng(0)
    for _ in range(50):
        phi = pacf_to_coeffs(rng.normal(scale=3, size=3))
        roots = np.roots(np.r_[1.0, -phi][::-1])
        assert np.all(np.abs(roots) > 1.0)


def test_ar1_recovery():
    y = ar1(10_000, 0.7, seed=3)
    model = fit(series(y), SarimaOrders(1, 0, 0, 0, 0, 0, 24))
    assert model.converged
    assert model.ar_coeffs[0] == pytest.approx(0.7, abs=0.05)


def test_white_noise_arma_cancels():
    # with both an AR and an MA term, CSS lands on the common-factor ridge
    # phi ~ -theta; the fitted process is still white noise
    y = np.random.default_rng(11).standard_normal(10_000)
    model = fit(series(y), SarimaOrders(1, 0, 1, 0, 0, 0, 24))
    assert abs(model.ar_coeffs[0] + model.ma_coeffs[0]) < 0.1
    psi = np.convolve(model.ma_polynomial(), np.r_[1.0, model.ar_coeffs[0] ** np.arange(1, 30)])[1:10]
    assert np.max(np.abs(psi)) < 0.1


@pytest.mark.xfail(reason="CSS is not identified on the AR/MA cancellation ridge; see the decisions ledger",
                   strict=False)
def test_white_noise_coefficients_individually_small():
    y = np.random.default_rng(11).standard_normal(10_000)
    model = fit(series(y), SarimaOrders(1, 0, 1, 0, 0, 0, 24))
    assert abs(model.ar_coeffs[0]) < 0.1 and abs(model.ma_coeffs[0]) < 0.1


def test_constant_series_differenced():
    model = fit(series(np.full(500, 4.2)), SarimaOrders(1, 1, 1, 0, 0, 0, 24))
    assert np.allclose(model.ar_coeffs, 0) and np.allclose(model.ma_coeffs, 0)
    assert model.residual_variance == pytest.approx(0.0, abs=1e-20)


def test_fit_is_deterministic():
    y = ar1(3000, 0.5, seed=4)
    a = fit(series(y), SarimaOrders(1, 0, 1, 0, 0, 0, 24))
    b = fit(series(y), SarimaOrders(1, 0, 1, 0, 0, 0, 24))
    assert a.ar_coeffs.tobytes() == b.ar_coeffs.tobytes() and a.intercept == b.intercept


def test_fit_rejects_bad_input():
    with pytest.raises(InvalidArgumentError):
        fit(series(np.ones(20)), SarimaOrders())
    y = np.ones(200)
    y[5] = np.nan
    with pytest.raises(InvalidArgumentError):
        fit(y, SarimaOrders(1, 0, 0, 0, 0, 0, 24))


def test_forecast_constant_intercept():
    o = SarimaOrders(0, 0, 0, 0, 0, 0, 24)
    out = forecast(zero_model(o, intercept=3.5), series(np.ones(10)), 24)
    assert np.all(out.values == 3.5)
    assert out.start_time == series(np.ones(10)).end_time


def test_forecast_ar1_closed_form():
    o = SarimaOrders(1, 0, 0, 0, 0, 0, 24)
    m = SarimaModel(o, [0.6], [], [], [], 2.0, 1.0, np.zeros(1))
    hist = np.array([1.0, 5.0])
    out = forecast(m, hist, 10)
    h = np.arange(1, 11)
    assert np.allclose(out, 2.0 + 0.6 ** h * (5.0 - 2.0), atol=1e-12)


def test_forecast_seasonal_random_walk():
    o = SarimaOrders(0, 0, 0, 0, 1, 0, 24)
    hist = np.tile(np.sin(np.arange(24)), 3)
    assert np.allclose(forecast(zero_model(o), hist, 24), hist[-24:])


def test_forecast_iterated_consistency_pure_ar():
    o = SarimaOrders(2, 0, 0, 1, 0, 0, 24)
    m = SarimaModel(o, [0.5, -0.2], [], [0.3], [], 1.0, 1.0, np.zeros(1))
    hist = np.random.default_rng(2).normal(size=100)
    full = forecast(m, hist, 30)
    first = forecast(m, hist, 12)
    rest = forecast(m, np.r_[hist, first], 18)
    assert np.allclose(full, np.r_[first, rest], atol=1e-12)


def test_forecast_needs_history():
    with pytest.raises(InvalidArgumentError):
        forecast(zero_model(SarimaOrders()), np.ones(10), 24)


def test_residual_matrix_examples():
    o = SarimaOrders(0, 0, 0, 0, 1, 0, 24)
    periodic = np.tile(np.cos(np.arange(24) / 3), 40)
    assert np.allclose(residual_matrix(zero_model(o), periodic), 0.0)
    const = zero_model(SarimaOrders(0, 0, 0, 0, 0, 0, 24), intercept=2.0)
    r = residual_matrix(const, np.full(24 * 35, 3.0))
    assert r.shape[1] == 24 and np.all(r == 1.0)
    with pytest.raises(InvalidArgumentError):
        residual_matrix(const, np.ones(24 * 10))


def test_residual_matrix_white_noise_means():
    n_days = 200
    y = np.random.default_rng(5).standard_normal(24 * n_days)
    r = residual_matrix(zero_model(SarimaOrders(0, 0, 0, 0, 0, 0, 24)), y)
    assert np.all(np.abs(r.mean(axis=0)) < 3.0 / np.sqrt(r.shape[0]) + 0.05)


def test_seasonal_forecast_beats_persistence():
    n_days = 120
    noise = ar1(24 * n_days, 0.6, seed=9) * 0.5
    y = 10 + 3 * np.sin(2 * np.pi * np.arange(24 * n_days) / 24) + noise
    train = y[: 24 * 90]
    model = fit(train, SarimaOrders())
    r = residual_matrix(model, y)[-30:]
    days = y.reshape(n_days, 24)
    persistence = days[-30:] - days[-31:-1]
    assert np.sqrt(np.mean(r ** 2)) < np.sqrt(np.mean(persistence ** 2))
