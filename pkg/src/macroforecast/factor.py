"""Single-factor direct forecasts (factor-augmented autoregressions).

The first principal component of the EM-balanced, standardized panel is used
as the factor. For each variable and horizon h,

    y_{t} = a + b(L) f_{t-h} + g(L) y_{t-h} + e_t

is fit by OLS with the lag orders chosen jointly by BIC, and the forecast is
y_hat_{T+h} = a + b(L) f_T + g(L) y_T.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import DegenerateStatisticError, DimensionError, EstimationError, FactorizationError, ValidationError
from .numerics import bic, em_balance, ols, principal_components, standardize


def extract_factor(window, k_em: int = 1, tol: float = 1e-6, max_iter: int = 500) -> np.ndarray:
    """First principal-component factor of the balanced, standardized window.

    The sign is fixed so the loading on the first variable is nonnegative.
    """
    values = np.asarray(getattr(window, "values", window), dtype=float)
    if values.ndim != 2 or values.shape[1] < 2:
        raise DimensionError("factor extraction needs at least two variables")
    # rows that are entirely missing carry no information for PCA
    rows = ~np.all(np.isnan(values), axis=1)
    balanced = em_balance(values[rows], k=k_em, tol=tol, max_iter=max_iter)
    try:
        Z, _, _ = standardize(balanced)
    except DegenerateStatisticError as exc:
        raise FactorizationError(str(exc)) from None
    pc = principal_components(Z, 1)
    f = np.full(values.shape[0], np.nan)
    f[rows] = pc.factors[:, 0]
    return f


@dataclass(frozen=True)
class FactorRegressionSpec:
    variable: str
    horizon: int
    q_f: int
    q_y: int
    intercept: float
    beta: np.ndarray  # factor lags 0..q_f-1 (relative to t-h)
    gamma: np.ndarray  # own lags 0..q_y-1
    sigma2: float
    bic: float


def _direct_regressors(y, f, h, q_f, q_y, rows):
    cols = [np.ones(rows.size)]
    cols += [f[rows - h - l] for l in range(q_f)]
    cols += [y[rows - h - l] for l in range(q_y)]
    return np.column_stack(cols)


def fit_direct(
    y,
    f,
    h: int,
    q_f_range: Sequence[int] = range(1, 4),
    q_y_range: Sequence[int] = range(1, 7),
    variable: str = "",
) -> FactorRegressionSpec:
    """BIC-selected direct h-step regression.

    All candidate (q_f, q_y) pairs are fit on a common sample: target dates t
    for which every regressor of the largest candidate, dated t-h and
    earlier, is observed.
    """
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.shape != f.shape:
        raise DimensionError("y and factor must have the same length")
    if h < 1:
        raise ValidationError("horizon must be >= 1")
    q_f_range, q_y_range = list(q_f_range), list(q_y_range)
    q_max = max(max(q_f_range), max(q_y_range))
    t = np.arange(h + q_max - 1, y.size)
    ok = ~np.isnan(y[t])
    for l in range(q_max):
        ok &= ~np.isnan(y[t - h - l]) & ~np.isnan(f[t - h - l])
    rows = t[ok]
    n_par = 1 + max(q_f_range) + max(q_y_range)
    if rows.size <= n_par:
        raise EstimationError(f"only {rows.size} usable observations for {n_par} parameters at h={h}")
    target = y[rows]
    best = None
    for q_f, q_y in product(q_f_range, q_y_range):
        X = _direct_regressors(y, f, h, q_f, q_y, rows)
        res = ols(X, target)
        rss = float(res.resid @ res.resid)
        crit = bic(max(rss, np.finfo(float).tiny), rows.size, 1 + q_f + q_y)
        if best is None or crit < best[0]:
            best = (crit, q_f, q_y, res)
    crit, q_f, q_y, res = best
    return FactorRegressionSpec(
        variable, h, q_f, q_y,
        float(res.coef[0]), res.coef[1 : 1 + q_f].copy(), res.coef[1 + q_f :].copy(),
        float(res.sigma2), float(crit),
    )


def forecast_direct(spec: FactorRegressionSpec, y, f) -> float:
    """a + sum_l beta_l f_{T-l} + sum_l gamma_l y_{T-l} using the latest values."""
    y = np.asarray(y, dtype=float)
    f = np.asarray(f, dtype=float)
    if y.size < spec.q_y or f.size < spec.q_f:
        raise ValidationError("not enough recent observations for the forecast")
    y_lags = y[::-1][: spec.q_y]
    f_lags = f[::-1][: spec.q_f]
    if np.isnan(y_lags).any() or np.isnan(f_lags).any():
        raise ValidationError(f"missing regressor values for {spec.variable or 'series'}")
    return float(spec.intercept + spec.beta @ f_lags + spec.gamma @ y_lags)


@dataclass
class FactorModel:
    """Per-variable direct forecasts for horizons 1..H from one extracted factor."""

    q_f_max: int = 3
    q_y_max: int = 6
    k_em: int = 1

    def forecast_window(self, window, H: int) -> np.ndarray:
        values = np.asarray(getattr(window, "values", window), dtype=float)
        names = getattr(window, "names", [str(j) for j in range(values.shape[1])])
        f = extract_factor(values, self.k_em)
        out = np.empty((H, values.shape[1]))
        for j in range(values.shape[1]):
            y = values[:, j]
            for h in range(1, H + 1):
                spec = fit_direct(y, f, h, range(1, self.q_f_max + 1), range(1, self.q_y_max + 1), names[j])
                out[h - 1, j] = forecast_direct(spec, y, f)
        return out
