"""Univariate autoregressive benchmark and AR scale utilities."""

from __future__ import annotations

import numpy as np

from .errors import DegenerateStatisticError, DimensionError, SingularityError
from .numerics import ols


def _trim(y) -> np.ndarray:
    y = np.asarray(y, dtype=float).ravel()
    ok = np.flatnonzero(~np.isnan(y))
    if ok.size == 0:
        return y[:0]
    y = y[ok[0] :]
    if np.isnan(y).any():
        raise DimensionError("series has interior or trailing missing values")
    return y


def ar_fit(y, p: int):
    """OLS fit of y_t = c + a_1 y_{t-1} + ... + a_p y_{t-p} + e_t.

    Leading missing values are dropped. Returns the coefficient
    vector (intercept first) and the residuals.
    """
    y = _trim(y)
    T = y.size - p
    X = np.ones((T, p + 1))
    for l in range(1, p + 1):
        X[:, l] = y[p - l : y.size - l]
    res = ols(X, y[p:])
    return res.coef, res.resid


def ar_resid_scale(y, p: int) -> float:
    """Residual standard error of an AR(p) with intercept.

    The denominator is the effective sample size minus the p + 1 estimated
    coefficients; with p = 0 this is the sample standard deviation.
    """
    y = _trim(y)
    if y.size < p + 10:
        raise DimensionError(f"need at least p + 10 = {p + 10} observations, got {y.size}")
    _, resid = ar_fit(y, p)
    dof = resid.size - (p + 1)
    return float(np.sqrt(resid @ resid / dof))


def ar1_forecast(y, H: int) -> np.ndarray:
    """Iterated AR(1) point forecasts for horizons 1..H.

    y_hat_{T+h} = c (1 + rho + ... + rho^{h-1}) + rho^h y_T.
    """
    y = _trim(y)
    if y.size < 10:
        raise DimensionError(f"AR(1) benchmark needs at least 10 observations, got {y.size}")
    if np.ptp(y) == 0:
        raise DegenerateStatisticError("AR(1) fit is degenerate for a constant series")
    try:
        (c, rho), _ = ar_fit(y, 1)
    except SingularityError as exc:
        raise DegenerateStatisticError(f"AR(1) fit is degenerate: {exc}") from None
    h = np.arange(1, H + 1)
    powers = rho**h
    if rho == 1.0:
        geom = h.astype(float)
    else:
        geom = (1.0 - powers) / (1.0 - rho)
    return c * geom + powers * y[-1]
