"""Seasonal decomposition, AR fitting, and forecasting tests."""

from __future__ import annotations

import numpy as np
import pytest

from helpers import make_series, noiseless_series, random_loading_set
from tensorcast.factor_model import (
    FactorSeries,
    Ranks,
    extract_factors,
    fit_factor_model,
    fitted_values,
    reconstruct_common,
)
from tensorcast.forecast import (
    AR1Fit,
    FactorForecast,
    classical_decompose,
    fit_ar,
    fit_ar1,
    fit_ar_aic,
    forecast_ar,
    forecast_ar1,
    forecast_factors,
    forecast_observations,
    forecast_series,
)
from tensorcast.panel import Standardization, destandardize


class TestClassicalDecompose:
    def test_pure_seasonal_signal(self):
        s = np.array([1.0, -2.0, 0.5, 0.5])
        x = s[np.arange(16) % 4]
        d = classical_decompose(x, 4)
        np.testing.assert_allclose(d.seasonal, s, atol=1e-12)
        half = 2
        np.testing.assert_allclose(d.trend[half:-half], 0.0, atol=1e-12)
        np.testing.assert_allclose(d.remainder, 0.0, atol=1e-12)

    def test_linear_trend_no_seasonality(self):
        t = np.arange(20, dtype=float)
        x = 3.0 + 0.7 * t
        d = classical_decompose(x, 4)
        np.testing.assert_allclose(d.seasonal, 0.0, atol=1e-10)
        # A centered moving average reproduces a linear function exactly.
        np.testing.assert_allclose(d.trend[2:-2], x[2:-2], atol=1e-10)

    def test_composite_signal_recovery(self):
        rng = np.random.default_rng(0)
        m, t = 52, 208
        s = rng.standard_normal(m)
        s -= s.mean()
        trend = 1.5 + 0.02 * np.arange(t)
        x = trend + s[np.arange(t) % m]
        d = classical_decompose(x, m)
        np.testing.assert_allclose(d.seasonal, s, atol=1e-9)
        half = m // 2
        np.testing.assert_allclose(d.trend[half : t - half], trend[half : t - half], atol=1e-9)

    def test_too_short_errors(self):
        with pytest.raises(ValueError):
            classical_decompose(np.zeros(7), 4)

    def test_seasonal_sums_to_zero_and_shift_invariant(self):
        rng = np.random.default_rng(1)
        x = rng.standard_normal(40)
        d = classical_decompose(x, 5)
        assert abs(d.seasonal.sum()) < 1e-10
        shifted = classical_decompose(x + 17.0, 5)
        np.testing.assert_allclose(shifted.seasonal, d.seasonal, atol=1e-10)

    def test_components_reconstruct_interior(self):
        rng = np.random.default_rng(2)
        x = rng.standard_normal(30)
        d = classical_decompose(x, 4)
        recon = d.trend + d.seasonal[np.arange(30) % 4] + d.remainder
        np.testing.assert_allclose(recon, x, atol=1e-12)


class TestFitAr1:
    def test_deterministic_halving_recursion(self):
        x = 0.5 ** np.arange(30)
        fit = fit_ar1(x)
        assert abs(fit.phi - 0.5) < 1e-12
        assert abs(fit.c) < 1e-12
        assert fit.variance < 1e-12

    def test_recovers_simulated_coefficient(self):
        rng = np.random.default_rng(3)
        x = np.empty(2000)
        x[0] = 0.0
        for t in range(1, 2000):
            x[t] = 1.0 + 0.7 * x[t - 1] + rng.standard_normal()
        fit = fit_ar1(x)
        assert abs(fit.phi - 0.7) < 0.05

    def test_constant_series_errors(self):
        with pytest.raises(ValueError, match="constant"):
            fit_ar1(np.full(10, 2.5))

    def test_too_short_errors(self):
        with pytest.raises(ValueError):
            fit_ar1(np.array([1.0, 2.0]))


class TestForecastAr1:
    def test_phi_zero_forecasts_mean(self):
        out = forecast_ar1(AR1Fit(c=3.0, phi=0.0, variance=1.0), last=100.0, n=4)
        np.testing.assert_array_equal(out, [3.0, 3.0, 3.0, 3.0])

    def test_random_walk_forecasts_flat(self):
        out = forecast_ar1(AR1Fit(c=0.0, phi=1.0, variance=1.0), last=7.0, n=5)
        np.testing.assert_array_equal(out, np.full(5, 7.0))

    def test_halving_recursion(self):
        out = forecast_ar1(AR1Fit(c=0.0, phi=0.5, variance=0.0), last=8.0, n=3)
        np.testing.assert_array_equal(out, [4.0, 2.0, 1.0])

    def test_converges_to_stationary_mean(self):
        c, phi, last = 2.0, 0.8, 11.0
        mean = c / (1 - phi)
        out = forecast_ar1(AR1Fit(c=c, phi=phi, variance=0.0), last=last, n=60)
        for h in (1, 10, 30, 60):
            assert abs(out[h - 1] - mean) < abs(phi) ** h * abs(last - mean) + 1e-12


class TestFitArGeneral:
    def test_ar0_is_mean_model(self):
        x = np.array([1.0, 3.0, 5.0, 3.0])
        fit = fit_ar(x, 0)
        assert fit.order == 0
        assert fit.intercept == pytest.approx(3.0)
        np.testing.assert_array_equal(forecast_ar(fit, x, 3), np.full(3, fit.intercept))

    def test_order_one_matches_fit_ar1(self):
        rng = np.random.default_rng(4)
        x = rng.standard_normal(50).cumsum()
        a, b = fit_ar(x, 1), fit_ar1(x)
        assert a.intercept == pytest.approx(b.c, abs=1e-10)
        assert a.coeffs[0] == pytest.approx(b.phi, abs=1e-10)

    def test_exact_ar2_recursion_recovered(self):
        x = np.empty(40)
        x[0], x[1] = 1.0, 0.5
        for t in range(2, 40):
            x[t] = 0.3 + 0.6 * x[t - 1] - 0.2 * x[t - 2]
        fit = fit_ar(x, 2)
        np.testing.assert_allclose(fit.coeffs, (0.6, -0.2), atol=1e-8)
        assert fit.variance < 1e-12

    def test_aic_prefers_small_order_for_constants_and_finds_structure(self):
        fit = fit_ar_aic(np.full(30, 4.0))
        assert fit.order == 0
        rng = np.random.default_rng(5)
        x = np.empty(400)
        x[0] = x[1] = 0.0
        for t in range(2, 400):
            x[t] = 0.5 * x[t - 1] + 0.3 * x[t - 2] + 0.1 * rng.standard_normal()
        assert fit_ar_aic(x).order >= 1


class TestForecastSeries:
    def test_purely_seasonal_series(self):
        m = 6
        s = np.array([2.0, -1.0, 0.5, -0.5, -2.0, 1.0])
        x = 3.0 + s[np.arange(24) % m]
        out = forecast_series(x, m, 8)
        expected = 3.0 + s[(24 + np.arange(8)) % m]
        np.testing.assert_allclose(out, expected, atol=1e-8)

    def test_ar_only_series_matches_direct_ar1(self):
        # A drift line x_t = a + b t is an exact AR(1) recursion (phi=1, c=b)
        # and the one AR path whose decomposition seasonal vanishes: the
        # centered moving average reproduces a line exactly, so nothing leaks
        # into the seasonal indices. (A decaying |phi|<1 transient would leak
        # into the trend windows and violate the seasonal-free premise.)
        t = 156
        x = 2.0 + 0.03 * np.arange(t)
        direct = forecast_ar1(fit_ar1(x), x[-1], 4)
        via_decomposition = forecast_series(x, 52, 4)
        np.testing.assert_allclose(via_decomposition, direct, atol=1e-6)

    def test_zero_series_forecasts_zero(self):
        np.testing.assert_array_equal(forecast_series(np.zeros(30), 4, 5), np.zeros(5))


class TestForecastFactors:
    def test_periodic_factors_forecast_exactly(self):
        t, m = 24, 6
        vals = np.empty((t, 1, 1, 2))
        vals[:, 0, 0, 0] = np.sin(2 * np.pi * np.arange(t) / m) + 2.0
        vals[:, 0, 0, 1] = np.cos(2 * np.pi * np.arange(t) / m) - 1.0
        f = FactorSeries(
            values=vals,
            period_starts=np.datetime64("2020-01-06T00", "h")
            + (168 * np.arange(t)).astype("timedelta64[h]"),
            provider_ids=["p"],
        )
        ff = forecast_factors(f, n=4, period=m)
        # Horizon h predicts the series continuation at 0-based index t-1+h.
        future = t + np.arange(4)
        expected = np.empty((4, 1, 1, 2))
        expected[:, 0, 0, 0] = np.sin(2 * np.pi * future / m) + 2.0
        expected[:, 0, 0, 1] = np.cos(2 * np.pi * future / m) - 1.0
        np.testing.assert_allclose(ff.values, expected, atol=1e-8)
        assert str(ff.period_starts[0]) > str(f.period_starts[-1])

    def test_zero_factors_forecast_zero(self):
        f = FactorSeries(
            values=np.zeros((20, 2, 1, 1)),
            period_starts=np.datetime64("2020-01-06T00", "h")
            + (168 * np.arange(20)).astype("timedelta64[h]"),
            provider_ids=["p"],
        )
        ff = forecast_factors(f, n=3, period=4)
        np.testing.assert_array_equal(ff.values, np.zeros((3, 2, 1, 1)))

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        vals = rng.standard_normal((30, 2, 1, 2))
        f = FactorSeries(
            values=vals,
            period_starts=np.datetime64("2020-01-06T00", "h")
            + (168 * np.arange(30)).astype("timedelta64[h]"),
            provider_ids=["p"],
        )
        a = forecast_factors(f, n=5, period=4)
        b = forecast_factors(f, n=5, period=4)
        assert a.values.tobytes() == b.values.tobytes()


class TestForecastObservations:
    def test_zero_factor_forecast_returns_mu(self):
        rng = np.random.default_rng(7)
        loadings = random_loading_set(rng, (3, 4, 5), (1, 1, 1))
        z = Standardization(
            mu=rng.uniform(10, 20, (3, 4, 5)), sigma=rng.uniform(0.5, 2, (3, 4, 5))
        )
        ff = FactorForecast(
            values=np.zeros((2, 1, 1, 1)),
            period_starts=np.zeros(2, dtype="datetime64[h]"),
            provider_ids=["a", "b", "c"],
        )
        out = forecast_observations(ff, loadings, z)
        np.testing.assert_array_equal(out.values, np.broadcast_to(z.mu, (2, 3, 4, 5)))

    def test_same_reconstruction_as_fitted_values(self):
        rng = np.random.default_rng(8)
        loadings = random_loading_set(rng, (4, 3, 5), (2, 1, 2))
        factors = rng.standard_normal((6, 2, 1, 2))
        z = Standardization(mu=rng.uniform(1, 2, (4, 3, 5)), sigma=rng.uniform(0.5, 2, (4, 3, 5)))
        starts = np.zeros(6, dtype="datetime64[h]")
        f = FactorSeries(values=factors, period_starts=starts, provider_ids=list("abcd"))
        ff = FactorForecast(values=factors, period_starts=starts, provider_ids=list("abcd"))
        a = fitted_values(f, loadings, z).values
        b = forecast_observations(ff, loadings, z).values
        assert a.tobytes() == b.tobytes()

    def test_noiseless_periodic_system_one_step_ahead(self):
        # Exactly periodic factors, noiseless observations: the pipeline must
        # predict the next tensor almost exactly.
        rng = np.random.default_rng(9)
        t, m = 157, 52
        dims, ranks = (5, 4, 6), (1, 1, 2)
        loadings = random_loading_set(rng, dims, ranks)
        grid = np.arange(t)
        factors = np.empty((t, *ranks))
        factors[:, 0, 0, 0] = np.sin(2 * np.pi * grid / m) + 2.0
        factors[:, 0, 0, 1] = np.cos(2 * np.pi * grid / m) - 1.0
        values = reconstruct_common(factors, loadings)
        mu = rng.uniform(50, 100, dims)
        sigma = rng.uniform(0.5, 2.0, dims)
        raw = destandardize(make_series(values), Standardization(mu=mu, sigma=sigma))

        train = make_series(raw.values[: t - 1])
        model, fitted_factors = fit_factor_model(train, Ranks(*ranks[:1], ranks[1:]))
        ff = forecast_factors(fitted_factors, n=1, period=m)
        pred = forecast_observations(ff, model.loadings, model.standardization)
        truth = raw.values[t - 1]
        rel = np.linalg.norm(pred.values[0] - truth) / np.linalg.norm(truth)
        assert rel < 1e-6
