import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from macroforecast import numerics as nm
from macroforecast.bvar import NIWPosterior
from macroforecast.errors import (
    DegenerateStatisticError,
    DimensionError,
    DomainError,
    FactorizationError,
    SingularityError,
    ValidationError,
)


def test_cholesky_plain_and_jitter():
    a = np.array([[4.0, 2.0], [2.0, 3.0]])
    cf = nm.cholesky(a)
    assert cf.jitter_applied == 0.0
    np.testing.assert_allclose(cf.lower @ cf.lower.T, a, rtol=1e-12)
    singular = np.ones((3, 3))
    cf = nm.cholesky(singular)
    assert cf.jitter_applied > 0
    rel = np.linalg.norm(cf.lower @ cf.lower.T - singular) / np.linalg.norm(singular)
    assert rel < 1e-5
    with pytest.raises(FactorizationError):
        nm.cholesky(-np.eye(2))


def test_ols_examples():
    assert nm.ols(np.ones((3, 1)), np.array([2.0, 4.0, 6.0])).coef[0] == pytest.approx(4.0)
    y = 0.5 ** np.arange(50)
    res = nm.ols(y[:-1, None], y[1:])
    assert abs(res.coef[0] - 0.5) < 1e-12
    rng = np.random.default_rng(0)
    X = np.hstack([np.eye(10)[:, :1], rng.standard_normal((10, 2))])
    Y = rng.standard_normal((10, 2))
    res = nm.ols(X, Y)
    assert np.abs(X.T @ res.resid).max() < 1e-10
    assert res.sigma2.shape == (2,)
    np.testing.assert_allclose(res.sigma2, (res.resid**2).sum(0) / 7)


def test_ols_rank_deficient():
    X = np.column_stack([np.ones(5), np.ones(5)])
    with pytest.raises(SingularityError):
        nm.ols(X, np.arange(5.0))


@settings(max_examples=40, deadline=None)
@given(arrays(np.float64, (12, 3), elements=st.floats(-10, 10)), arrays(np.float64, (12, 2), elements=st.floats(-10, 10)))
def test_ols_normal_equations(X, Y):
    X = X + np.eye(12, 3) * 5  # keep full rank
    try:
        res = nm.ols(X, Y)
    except SingularityError:
        return
    lhs = X.T @ (Y - X @ res.coef)
    assert np.abs(lhs).max() <= 1e-8 * max(1.0, np.linalg.norm(X.T @ Y))


def test_pca_examples():
    x = np.random.default_rng(1).standard_normal(50)
    Z, _, _ = nm.standardize(np.column_stack([x, x]))
    pc = nm.principal_components(Z, 1)
    np.testing.assert_allclose(pc.loadings[:, 0], [2**-0.5, 2**-0.5], atol=1e-12)
    assert pc.eigvals[0] == pytest.approx(2.0)
    # axis-aligned dominant direction
    rng = np.random.default_rng(2)
    Z = rng.standard_normal((4000, 2)) * [np.sqrt(3), 1]
    Z -= Z.mean(0)
    pc = nm.principal_components(Z, 1)
    np.testing.assert_allclose(np.abs(pc.loadings[:, 0]), [1, 0], atol=0.05)


def test_pca_matches_eigensolver():
    rng = np.random.default_rng(3)
    Z, _, _ = nm.standardize(rng.standard_normal((100, 5)) @ rng.standard_normal((5, 5)))
    pc = nm.principal_components(Z, 3)
    w, v = np.linalg.eigh(np.corrcoef(Z, rowvar=False))
    order = np.argsort(w)[::-1][:3]
    np.testing.assert_allclose(pc.eigvals, w[order], rtol=1e-8)
    for c, j in enumerate(order):
        ref = v[:, j] * np.sign(v[0, j])
        np.testing.assert_allclose(pc.loadings[:, c], ref, atol=1e-8)
        np.testing.assert_allclose(pc.factors[:, c], Z @ ref, atol=1e-8)
    np.testing.assert_allclose(pc.loadings.T @ pc.loadings, np.eye(3), atol=1e-12)


def test_pca_full_rank_reconstruction_and_errors():
    rng = np.random.default_rng(4)
    Z = rng.standard_normal((30, 4))
    pc = nm.principal_components(Z, 4)
    np.testing.assert_allclose(pc.factors @ pc.loadings.T, Z, atol=1e-10)
    with pytest.raises(DimensionError):
        nm.principal_components(Z, 5)
    with pytest.raises(DimensionError):
        nm.principal_components(np.column_stack([Z[:, 0], Z[:, 0]]), 2)


def test_em_balance_examples():
    rng = np.random.default_rng(5)
    full = rng.standard_normal((20, 3))
    np.testing.assert_array_equal(nm.em_balance(full), full)
    f, lam = rng.standard_normal(60), rng.uniform(0.5, 2.0, 6)
    Z = np.outer(f, lam) + 3.0
    Zm = Z.copy()
    Zm[17, 4] = np.nan
    out = nm.em_balance(Zm, k=1, tol=1e-12, max_iter=5000)
    assert abs(out[17, 4] - Z[17, 4]) < 1e-6
    Zm[:, 2] = np.nan
    with pytest.raises(ValidationError):
        nm.em_balance(Zm)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_em_preserves_observed_cells(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((25, 4)) + rng.standard_normal(25)[:, None]
    X[rng.random(X.shape) < 0.15] = np.nan
    X[:2] = rng.standard_normal((2, 4))  # every column keeps >= 2 observations
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", nm.ConvergenceWarning)
        out = nm.em_balance(X)
    obs = ~np.isnan(X)
    assert np.array_equal(out[obs], X[obs])
    assert np.all(np.isfinite(out))


def test_em_nonconvergence_warns():
    rng = np.random.default_rng(6)
    X = rng.standard_normal((30, 5))
    X[rng.random(X.shape) < 0.3] = np.nan
    X[:2] = 1.0 + rng.standard_normal((2, 5))
    with pytest.warns(nm.ConvergenceWarning):
        nm.em_balance(X, tol=0.0, max_iter=3)


def test_bic():
    assert nm.bic(10.0, 10, 0) == 0.0
    assert nm.bic(50.0, 100, 2) == pytest.approx(-60.104, abs=1e-3)
    assert nm.bic(50.0, 100, 3) > nm.bic(50.0, 100, 2)
    with pytest.raises(DomainError):
        nm.bic(0.0, 10, 1)


def test_partial_autocorr():
    wn = np.random.default_rng(7).standard_normal(10_000)
    assert abs(nm.partial_autocorr_lag1(wn)) < 0.05
    assert nm.partial_autocorr_lag1(np.arange(1.0, 101.0)) > 0.9
    assert nm.partial_autocorr_lag1((-1.0) ** np.arange(50)) == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(DegenerateStatisticError):
        nm.partial_autocorr_lag1(np.ones(10))


def test_rng_stream_determinism():
    a = nm.RngStream(42, 3).generator().standard_normal(5)
    b = nm.RngStream(42, 3).generator().standard_normal(5)
    c = nm.RngStream(42, 4).generator().standard_normal(5)
    assert np.array_equal(a, b) and not np.array_equal(a, c)
    assert nm.RngStream.keyed(1, "m", "1985-01") == nm.RngStream.keyed(1, "m", "1985-01")


def _post(K=3, N=2, v=12.0, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((K, K))
    B = rng.standard_normal((N, N))
    return NIWPosterior(rng.standard_normal((K, N)), A @ A.T / K + 0.5 * np.eye(K), B @ B.T + np.eye(N), v)


def test_iw_mean():
    post = _post()
    _, sig = nm.sample_matric_normal_iw(post, nm.RngStream(1).generator(), 100_000)
    target = post.S_bar / (post.v_bar - 2 - 1)
    assert np.abs(sig.mean(0) - target).max() / np.abs(target).max() < 0.02


def test_kronecker_covariance():
    post = _post(seed=1)
    phis, _ = nm.sample_matric_normal_iw(post, nm.RngStream(2).generator(), 100_000)
    vecs = phis.transpose(0, 2, 1).reshape(len(phis), -1)  # column-major vec
    emp = np.cov(vecs, rowvar=False)
    target = np.kron(post.S_bar / (post.v_bar - 3), post.Omega_bar)
    assert np.linalg.norm(emp - target) / np.linalg.norm(target) < 0.03


def test_sampler_degenerate_and_determinism():
    post = _post()
    tight = NIWPosterior(post.Phi_bar, 1e-12 * np.eye(3), post.S_bar, post.v_bar)
    phis, _ = nm.sample_matric_normal_iw(tight, 0, 1000)
    assert np.abs(phis - post.Phi_bar).max() < 1e-5
    d1 = nm.sample_matric_normal_iw(post, nm.RngStream(9).generator(), 10)
    d2 = nm.sample_matric_normal_iw(post, nm.RngStream(9).generator(), 10)
    assert all(np.array_equal(x, y) for x, y in zip(d1, d2))
    with pytest.raises(FactorizationError):
        nm.sample_matric_normal_iw(NIWPosterior(post.Phi_bar, post.Omega_bar, -np.eye(2), 12.0), 0, 5)
    with pytest.raises(ValidationError):
        nm.sample_matric_normal_iw(NIWPosterior(post.Phi_bar, post.Omega_bar, post.S_bar, 3.0), 0, 5)
