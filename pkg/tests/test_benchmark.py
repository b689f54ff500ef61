import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macroforecast import benchmark as BM
from macroforecast.errors import DegenerateStatisticError, DimensionError


def test_noiseless_geometric_decay():
    y = 8.0 * 0.5 ** np.arange(-19.0, 1.0)  # y_T = 8
    np.testing.assert_allclose(BM.ar1_forecast(y, 3), [4, 2, 1], atol=1e-9)


def test_zero_rho_gives_intercept():
    y = np.tile([1.0, 3.0, 1.0, 3.0], 5)
    coef, _ = BM.ar_fit(y, 1)
    fc = BM.ar1_forecast(y, 4)
    c, rho = coef
    want = [c * sum(rho**k for k in range(h)) + rho**h * y[-1] for h in range(1, 5)]
    np.testing.assert_allclose(fc, want, rtol=1e-12)


def test_zero_rho_forecasts_equal_intercept():
    y = np.concatenate([np.tile([0.0, 0.0, 1.0, 1.0], 6), [0.0]])  # lag-1 covariance exactly zero
    (c, rho), _ = BM.ar_fit(y, 1)
    assert abs(rho) < 1e-12
    np.testing.assert_allclose(BM.ar1_forecast(y, 3), c, atol=1e-12)


def test_rho_recovery():
    rng = np.random.default_rng(0)
    y = np.zeros(2000)
    for t in range(1, 2000):
        y[t] = 0.9 * y[t - 1] + rng.standard_normal()
    (_, rho), _ = BM.ar_fit(y, 1)
    assert abs(rho - 0.9) < 0.03


def test_errors():
    with pytest.raises(DegenerateStatisticError):
        BM.ar1_forecast(np.ones(20), 2)
    with pytest.raises(DimensionError):
        BM.ar1_forecast(np.arange(5.0), 2)
    with pytest.raises(DimensionError):
        BM.ar_resid_scale(np.arange(12.0), 4)


def test_resid_scale():
    rng = np.random.default_rng(1)
    assert 0.97 <= BM.ar_resid_scale(rng.standard_normal(5000), 6) <= 1.03
    y = 0.5 ** np.arange(60)
    assert BM.ar_resid_scale(y, 1) < 1e-8
    x = rng.standard_normal(40)
    assert BM.ar_resid_scale(x, 0) == pytest.approx(x.std(ddof=1))


def test_leading_missing_values_dropped():
    rng = np.random.default_rng(2)
    y = rng.standard_normal(50)
    z = np.concatenate([[np.nan, np.nan], y])
    np.testing.assert_array_equal(BM.ar1_forecast(z, 5), BM.ar1_forecast(y, 5))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000), st.integers(1, 24))
def test_closed_form_matches_iteration(seed, H):
    y = np.random.default_rng(seed).standard_normal(40).cumsum()
    (c, rho), _ = BM.ar_fit(y, 1)
    it, out = y[-1], []
    for _ in range(H):
        it = c + rho * it
        out.append(it)
    np.testing.assert_allclose(BM.ar1_forecast(y, H), out, rtol=1e-9, atol=1e-9)
    assert np.array_equal(BM.ar1_forecast(y, H), BM.ar1_forecast(y, H))
