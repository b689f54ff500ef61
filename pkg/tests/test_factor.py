import numpy as np
import pytest

from macroforecast import factor as F
from macroforecast.errors import EstimationError, FactorizationError, ValidationError


def test_identical_columns_factor_is_common_series():
    x = np.random.default_rng(0).standard_normal(80)
    f = F.extract_factor(np.column_stack([x, x, x]))
    z = (x - x.mean()) / x.std()
    np.testing.assert_allclose(f, np.sqrt(3) * z, atol=1e-10)


def test_rank_one_recovery_and_sign_rule():
    rng = np.random.default_rng(1)
    f = rng.standard_normal(300)
    lam = rng.uniform(0.5, 2, 8)
    X = np.outer(f, lam) + 1e-3 * rng.standard_normal((300, 8))
    fh = F.extract_factor(X)
    assert abs(np.corrcoef(fh, f)[0, 1]) > 0.999
    # loadings keep their sign, so the factor follows the data
    np.testing.assert_allclose(F.extract_factor(-X), -fh, atol=1e-10)
    np.testing.assert_array_equal(F.extract_factor(X), fh)


def test_factor_with_missing_cells_and_permutation():
    rng = np.random.default_rng(2)
    X = np.outer(rng.standard_normal(120), rng.uniform(0.5, 2, 5)) + 0.3 * rng.standard_normal((120, 5))
    X[:3, 2] = np.nan
    X[50, 4] = np.nan
    f = F.extract_factor(X)
    assert np.all(np.isfinite(f))
    Y = np.outer(rng.standard_normal(120), rng.uniform(0.5, 2, 4)) + 0.3 * rng.standard_normal((120, 4))
    g = F.extract_factor(Y)
    g_perm = F.extract_factor(Y[:, [2, 0, 3, 1]])
    np.testing.assert_allclose(np.abs(g), np.abs(g_perm), atol=1e-10)


def test_degenerate_panel():
    with pytest.raises(FactorizationError):
        F.extract_factor(np.ones((20, 3)))


def test_bic_picks_ar1_lag():
    hits = 0
    for seed in range(10):
        rng = np.random.default_rng(seed)
        y = np.zeros(500)
        for t in range(1, 500):
            y[t] = 0.6 * y[t - 1] + rng.standard_normal()
        spec = F.fit_direct(y, rng.standard_normal(500), 1)
        hits += spec.q_y == 1
    assert hits >= 9


def test_single_candidate_and_insufficient_sample():
    rng = np.random.default_rng(3)
    y, f = rng.standard_normal(60), rng.standard_normal(60)
    spec = F.fit_direct(y, f, 2, [2], [3])
    assert (spec.q_f, spec.q_y) == (2, 3)
    with pytest.raises(EstimationError):
        F.fit_direct(y[:8], f[:8], 1)


def test_forecast_direct_examples():
    spec = F.FactorRegressionSpec("x", 1, 1, 1, 3.0, np.zeros(1), np.zeros(1), 1.0, 0.0)
    assert F.forecast_direct(spec, [1.0, 2.0], [0.0, 5.0]) == 3.0
    spec = F.FactorRegressionSpec("x", 1, 1, 1, 0.0, np.zeros(1), np.array([0.5]), 1.0, 0.0)
    assert F.forecast_direct(spec, [9.0, 2.0], [0.0, 5.0]) == 1.0
    with pytest.raises(ValidationError):
        F.forecast_direct(spec, [1.0, np.nan], [0.0, 1.0])


def test_noiseless_generating_rule_recovered():
    rng = np.random.default_rng(4)
    T, h = 200, 3
    f = rng.standard_normal(T)
    y = rng.standard_normal(T)
    for t in range(h, T):
        y[t] = 0.3 * f[t - h] + 0.5 * y[t - h]
    spec = F.fit_direct(y, f, h, [1], [1])
    assert F.forecast_direct(spec, y, f) == pytest.approx(0.3 * f[-1] + 0.5 * y[-1], abs=1e-8)


def test_selection_scale_invariant_and_no_future_dependence():
    rng = np.random.default_rng(5)
    y = np.cumsum(rng.standard_normal(200)) * 0.1 + rng.standard_normal(200)
    f = rng.standard_normal(200)
    a = F.fit_direct(y, f, 2)
    b = F.fit_direct(7.5 * y, f, 2)
    assert (a.q_f, a.q_y) == (b.q_f, b.q_y)
    # the h-step fit at origin t uses targets up to t only
    cut = 150
    s1 = F.fit_direct(y[:cut], f[:cut], 4)
    y2 = y.copy()
    y2[cut:] = 1e6
    s2 = F.fit_direct(y2[:cut], f[:cut], 4)
    assert (s1.q_f, s1.q_y, s1.intercept) == (s2.q_f, s2.q_y, s2.intercept)
    np.testing.assert_array_equal(s1.gamma, s2.gamma)


def test_model_output_shape():
    rng = np.random.default_rng(6)
    X = np.outer(rng.standard_normal(150), rng.uniform(0.5, 2, 4)) + rng.standard_normal((150, 4))
    out = F.FactorModel().forecast_window(X, 12)
    assert out.shape == (12, 4) and np.all(np.isfinite(out))
