"""Bayesian VAR with the natural conjugate Normal-inverse-Wishart prior.

Model: Y = X Phi + E with rows of E ~ N(0, Sigma) and
Phi | Sigma ~ N(Phi0, Sigma kron Omega0), Sigma ~ IW(S0, v0).
X has an intercept column followed by lag blocks y_{t-1}, ..., y_{t-p}.
The Minnesota moments are complemented with sum-of-coefficients and
single-unit-root dummy observations; hyperparameters are chosen by maximizing
the closed-form marginal likelihood.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import optimize
from scipy.special import multigammaln

from .errors import (
    DimensionError,
    ForecastFailure,
    OptimizationFailure,
    ScaleError,
    ValidationError,
)
from .numerics import _as_generator, cholesky, sample_matric_normal_iw

LEVEL_TCODES = (1, 4)


@dataclass(frozen=True)
class VarDesign:
    Y: np.ndarray
    X: np.ndarray
    p: int
    presample: np.ndarray  # the first p rows of the window, used for dummies

    @property
    def T(self) -> int:
        return self.Y.shape[0]

    @property
    def N(self) -> int:
        return self.Y.shape[1]

    @property
    def K(self) -> int:
        return self.X.shape[1]


def lag_matrix(data: np.ndarray, p: int) -> np.ndarray:
    """Rows x_t = (1, y_{t-1}', ..., y_{t-p}') for t = p..T-1."""
    T = data.shape[0]
    blocks = [np.ones((T - p, 1))]
    blocks += [data[p - l : T - l] for l in range(1, p + 1)]
    return np.hstack(blocks)


def build_design(data, p: int) -> VarDesign:
    """VAR design from a complete T x N window (array or TimeSeriesPanel)."""
    data = np.asarray(getattr(data, "values", data), dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if p < 1:
        raise DimensionError("lag order p must be >= 1")
    if data.shape[0] <= p:
        raise DimensionError(f"need more than p={p} rows, got {data.shape[0]}")
    if np.isnan(data).any():
        r, c = np.argwhere(np.isnan(data))[0]
        raise ValidationError(f"design requires a complete window; missing value at row {r}, column {c}")
    return VarDesign(data[p:].copy(), lag_matrix(data, p), p, data[:p].copy())


@dataclass(frozen=True)
class ConjugateHyper:
    """Prior tightness. ``mu1``/``mu2`` set to None drop the matching dummy block."""

    lambda1: float = 0.2
    mu1: float | None = 1.0
    mu2: float | None = 1.0
    lambda0: float = 100.0

    def __post_init__(self):
        if not (self.lambda1 > 0 and self.lambda0 > 0):
            raise ValidationError("lambda0 and lambda1 must be positive")
        for name in ("mu1", "mu2"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValidationError(f"{name} must be positive")


@dataclass(frozen=True)
class NIWPrior:
    Phi0: np.ndarray
    Omega0: np.ndarray  # diagonal, stored as full K x K
    S0: np.ndarray
    v0: float
    sigma_hat: np.ndarray


@dataclass(frozen=True)
class NIWPosterior:
    Phi_bar: np.ndarray
    Omega_bar: np.ndarray
    S_bar: np.ndarray
    v_bar: float


def phi_star_from_tcodes(tcodes: Sequence[int]) -> np.ndarray:
    """Prior mean on the first own lag: 1 for series kept in (log) levels, else 0."""
    return np.array([1.0 if c in LEVEL_TCODES else 0.0 for c in tcodes])


def ar_scales(data: np.ndarray, p: int) -> np.ndarray:
    """Residual standard errors of univariate AR(p) fits with intercept, per column."""
    from .benchmark import ar_resid_scale

    data = np.asarray(getattr(data, "values", data), dtype=float)
    return np.array([ar_resid_scale(data[:, j], p) for j in range(data.shape[1])])


def minnesota_prior(
    design: VarDesign | int,
    hyper: ConjugateHyper,
    sigma_hat,
    phi_star=None,
    p: int | None = None,
) -> NIWPrior:
    """Minnesota moments in conjugate form.

    Var[Phi_l(i, j)] = lambda1^2 / l^2 * sigma_i^2 / sigma_hat_j^2 for lags
    and lambda0^2 sigma_i^2 for the intercept, where sigma_i^2 comes from
    Sigma through the Kronecker product. Hence Omega0 is diagonal with
    lambda1^2 / (l^2 sigma_hat_j^2) on lag rows and lambda0^2 on the
    intercept row. v0 = N + 2 and S0 = diag((v0 - N - 1) sigma_hat^2) so that
    E[Sigma] = diag(sigma_hat^2).
    """
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    N = sigma_hat.size
    if p is None:
        if not isinstance(design, VarDesign):
            raise ValidationError("pass a VarDesign or the lag order p")
        p = design.p
    if np.any(~(sigma_hat > 0)) or not np.all(np.isfinite(sigma_hat)):
        raise ScaleError("sigma_hat must be positive and finite")
    K = N * p + 1
    phi_star = np.zeros(N) if phi_star is None else np.asarray(phi_star, dtype=float)
    Phi0 = np.zeros((K, N))
    Phi0[1 + np.arange(N), np.arange(N)] = phi_star
    diag = np.empty(K)
    diag[0] = hyper.lambda0**2
    for l in range(1, p + 1):
        diag[1 + (l - 1) * N : 1 + l * N] = hyper.lambda1**2 / (l**2 * sigma_hat**2)
    v0 = N + 2
    S0 = np.diag((v0 - N - 1) * sigma_hat**2)
    return NIWPrior(Phi0, np.diag(diag), S0, float(v0), sigma_hat)


def dummy_observations(presample, p: int, hyper: ConjugateHyper) -> tuple[np.ndarray, np.ndarray]:
    """Sum-of-coefficients and single-unit-root dummy rows.

    ``presample`` holds (at least) the first p observations of the window;
    their mean ybar0 calibrates both blocks.
    """
    presample = np.asarray(getattr(presample, "values", presample), dtype=float)
    ybar = presample[:p].mean(axis=0)
    N = ybar.size
    K = N * p + 1
    Ys, Xs = [], []
    if hyper.mu1 is not None:
        Yd1 = np.diag(ybar / hyper.mu1)
        Xd1 = np.zeros((N, K))
        Xd1[:, 1:] = np.tile(Yd1, p)
        Ys.append(Yd1)
        Xs.append(Xd1)
    if hyper.mu2 is not None:
        Yd2 = (ybar / hyper.mu2)[None, :]
        Xd2 = np.empty((1, K))
        Xd2[0, 0] = 1.0 / hyper.mu2
        Xd2[0, 1:] = np.tile(ybar / hyper.mu2, p)
        Ys.append(Yd2)
        Xs.append(Xd2)
    if not Ys:
        return np.zeros((0, N)), np.zeros((0, K))
    return np.vstack(Ys), np.vstack(Xs)


def _posterior_from_moments(prior: NIWPrior, XtX, XtY, YtY, T) -> NIWPosterior:
    om0_inv = 1.0 / np.diag(prior.Omega0)
    prec = XtX + np.diag(om0_inv)
    cf = cholesky(prec)
    rhs = om0_inv[:, None] * prior.Phi0 + XtY
    Phi_bar = cf.solve(rhs)
    Omega_bar = cf.solve(np.eye(prec.shape[0]))
    # Equal to S0 + Y'Y + Phi0' Om0^-1 Phi0 - Phi_bar' Om_bar^-1 Phi_bar, arranged
    # as residual + prior-deviation terms to avoid cancellation under tight priors.
    cross = Phi_bar.T @ XtY
    dev = Phi_bar - prior.Phi0
    S_bar = prior.S0 + (YtY - cross - cross.T + Phi_bar.T @ XtX @ Phi_bar) + dev.T @ (om0_inv[:, None] * dev)
    S_bar = 0.5 * (S_bar + S_bar.T)
    return NIWPosterior(Phi_bar, 0.5 * (Omega_bar + Omega_bar.T), S_bar, prior.v0 + T)


def posterior(Y: np.ndarray, X: np.ndarray, prior: NIWPrior) -> NIWPosterior:
    """Conjugate update on (already dummy-augmented) data."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    return _posterior_from_moments(prior, X.T @ X, X.T @ Y, Y.T @ Y, Y.shape[0])


def log_marginal_likelihood(prior: NIWPrior, post: NIWPosterior, T: int, N: int) -> float:
    """ln p(Y) as the ratio of prior, likelihood and posterior normalizing constants."""
    v0 = prior.v0
    ld_om_bar = cholesky(post.Omega_bar).logdet()
    ld_om0 = float(np.sum(np.log(np.diag(prior.Omega0))))
    ld_s_bar = cholesky(post.S_bar).logdet()
    ld_s0 = cholesky(prior.S0).logdet()
    return float(
        -0.5 * T * N * np.log(np.pi)
        + 0.5 * N * (ld_om_bar - ld_om0)
        - 0.5 * (v0 + T) * ld_s_bar
        + 0.5 * v0 * ld_s0
        + multigammaln(0.5 * (v0 + T), N)
        - multigammaln(0.5 * v0, N)
    )


@dataclass
class _Moments:
    """Cross products of the data, cached across hyperparameter evaluations."""

    XtX: np.ndarray
    XtY: np.ndarray
    YtY: np.ndarray
    T: int


def _data_log_ml(prior: NIWPrior, data: _Moments, Yd: np.ndarray, Xd: np.ndarray) -> float:
    """ln p(Y | theta) with the dummy rows treated as part of the prior.

    Computed as ln p(Y, Y_d) - ln p(Y_d).
    """
    N = prior.S0.shape[0]
    XdtXd, XdtYd, YdtYd = Xd.T @ Xd, Xd.T @ Yd, Yd.T @ Yd
    Td = Yd.shape[0]
    post_all = _posterior_from_moments(prior, data.XtX + XdtXd, data.XtY + XdtYd, data.YtY + YdtYd, data.T + Td)
    full = log_marginal_likelihood(prior, post_all, data.T + Td, N)
    if Td == 0:
        return full
    post_d = _posterior_from_moments(prior, XdtXd, XdtYd, YdtYd, Td)
    return full - log_marginal_likelihood(prior, post_d, Td, N)


@dataclass
class HyperSearch:
    """Search settings for the marginal-likelihood maximization."""

    lambda1_bounds: tuple[float, float] = (0.01, 5.0)
    mu1_bounds: tuple[float, float] = (0.01, 50.0)
    mu2_bounds: tuple[float, float] = (0.01, 50.0)
    grid_points: int = 7
    refine: bool = True
    max_iter: int = 400
    lambda0: float = 100.0


class ConjugateObjective:
    """ln p(Y | lambda1, mu1, mu2) for a fixed estimation window."""

    def __init__(self, window, p: int, phi_star=None, sigma_hat=None, lambda0: float = 100.0):
        data = np.asarray(getattr(window, "values", window), dtype=float)
        self.design = build_design(data, p)
        self.p = p
        self.N = self.design.N
        self.sigma_hat = ar_scales(data, p) if sigma_hat is None else np.asarray(sigma_hat, float)
        if phi_star is None:
            tcodes = getattr(window, "tcodes", None)
            phi_star = phi_star_from_tcodes(tcodes) if tcodes is not None else np.zeros(self.N)
        self.phi_star = np.asarray(phi_star, dtype=float)
        self.lambda0 = lambda0
        d = self.design
        self.moments = _Moments(d.X.T @ d.X, d.X.T @ d.Y, d.Y.T @ d.Y, d.T)

    def hyper(self, lambda1, mu1, mu2) -> ConjugateHyper:
        return ConjugateHyper(lambda1=lambda1, mu1=mu1, mu2=mu2, lambda0=self.lambda0)

    def prior(self, hyper: ConjugateHyper) -> NIWPrior:
        return minnesota_prior(self.design, hyper, self.sigma_hat, self.phi_star)

    def __call__(self, hyper: ConjugateHyper) -> float:
        prior = self.prior(hyper)
        Yd, Xd = dummy_observations(self.design.presample, self.p, hyper)
        return _data_log_ml(prior, self.moments, Yd, Xd)

    def posterior(self, hyper: ConjugateHyper) -> NIWPosterior:
        prior = self.prior(hyper)
        Yd, Xd = dummy_observations(self.design.presample, self.p, hyper)
        m = self.moments
        return _posterior_from_moments(
            prior, m.XtX + Xd.T @ Xd, m.XtY + Xd.T @ Yd, m.YtY + Yd.T @ Yd, m.T + Yd.shape[0]
        )


def _log_grid(bounds, n):
    return np.exp(np.linspace(np.log(bounds[0]), np.log(bounds[1]), n))


def maximize_log_grid(fn, bounds: Sequence[tuple[float, float]], grid_points: int, refine: bool, max_iter: int):
    """Coarse log-spaced grid search then bounded Nelder-Mead in log space.

    ``fn`` takes a tuple of positive parameters and returns a log density.
    Returns (argmax, value).
    """
    grids = [_log_grid(b, grid_points) for b in bounds]
    best_x, best_f = None, -np.inf
    for point in np.array(np.meshgrid(*grids, indexing="ij")).reshape(len(bounds), -1).T:
        try:
            f = fn(tuple(point))
        except (ArithmeticError, ValueError):
            continue
        if np.isfinite(f) and f > best_f:
            best_x, best_f = point, f
    if best_x is None:
        raise OptimizationFailure("objective was non-finite at every grid point")
    if not refine:
        return tuple(float(v) for v in best_x), float(best_f)

    log_bounds = [(np.log(lo), np.log(hi)) for lo, hi in bounds]

    def neg(z):
        z = np.clip(z, [b[0] for b in log_bounds], [b[1] for b in log_bounds])
        try:
            f = fn(tuple(np.exp(z)))
        except (ArithmeticError, ValueError):
            return np.inf
        return -f if np.isfinite(f) else np.inf

    res = optimize.minimize(
        neg,
        np.log(best_x),
        method="Nelder-Mead",
        bounds=log_bounds,
        options={"maxiter": max_iter, "xatol": 1e-4, "fatol": 1e-8},
    )
    if np.isfinite(res.fun) and -res.fun > best_f:
        z = np.clip(res.x, [b[0] for b in log_bounds], [b[1] for b in log_bounds])
        return tuple(float(v) for v in np.exp(z)), float(-res.fun)
    return tuple(float(v) for v in best_x), float(best_f)


def optimize_hyperparameters(
    window,
    p: int,
    search: HyperSearch | None = None,
    phi_star=None,
    sigma_hat=None,
) -> ConjugateHyper:
    """argmax over (lambda1, mu1, mu2) of the marginal likelihood; lambda0 fixed."""
    search = search or HyperSearch()
    obj = ConjugateObjective(window, p, phi_star, sigma_hat, search.lambda0)
    (l1, m1, m2), _ = maximize_log_grid(
        lambda th: obj(obj.hyper(*th)),
        [search.lambda1_bounds, search.mu1_bounds, search.mu2_bounds],
        search.grid_points,
        search.refine,
        search.max_iter,
    )
    return obj.hyper(l1, m1, m2)


def simulate_paths(phis: np.ndarray, sigmas: np.ndarray, last_obs: np.ndarray, H: int, rng) -> tuple[np.ndarray, int]:
    """Iterate VAR draws forward ``H`` steps with Gaussian shocks.

    ``phis`` is (D, K, N), ``sigmas`` (D, N, N), ``last_obs`` the most recent
    p observations (oldest first). Returns the mean path (H x N) over the
    draws whose paths stay finite, and the number of discarded draws.
    """
    gen = _as_generator(rng)
    D, K, N = phis.shape
    p = (K - 1) // N
    last_obs = np.asarray(last_obs, dtype=float)[-p:]
    if last_obs.shape != (p, N):
        raise DimensionError(f"need the last {p} observations of {N} variables")
    chol = np.empty_like(sigmas)
    for d in range(D):
        chol[d] = cholesky(sigmas[d]).lower
    # x holds (1, y_{t}, y_{t-1}, ..., y_{t-p+1}) per draw
    x = np.empty((D, K))
    x[:, 0] = 1.0
    x[:, 1:] = last_obs[::-1].reshape(-1)
    paths = np.empty((D, H, N))
    shocks = gen.standard_normal((H, D, N))
    with np.errstate(over="ignore", invalid="ignore"):
        for h in range(H):
            y = np.einsum("dk,dkn->dn", x, phis) + np.einsum("dnm,dm->dn", chol, shocks[h])
            paths[:, h] = y
            if p > 1:
                x[:, 1 + N :] = x[:, 1 : 1 + (p - 1) * N]
            x[:, 1 : 1 + N] = y
    ok = np.all(np.isfinite(paths), axis=(1, 2))
    n_bad = int(D - ok.sum())
    if n_bad > D / 2:
        raise ForecastFailure(f"{n_bad} of {D} simulated paths were non-finite")
    return paths[ok].mean(axis=0), n_bad


def forecast(post: NIWPosterior, last_obs, H: int, rng, n_draws: int = 1000) -> np.ndarray:
    """Point forecasts (H x N): mean of simulated predictive paths."""
    if H < 1 or n_draws < 1:
        raise ValidationError("H and n_draws must be >= 1")
    gen = _as_generator(rng)
    phis, sigmas = sample_matric_normal_iw(post, gen, n_draws)
    mean, _ = simulate_paths(phis, sigmas, last_obs, H, gen)
    return mean


def analytic_one_step(post: NIWPosterior, last_obs) -> np.ndarray:
    """x_T' Phi_bar, the posterior-mean one-step projection."""
    K, N = post.Phi_bar.shape
    p = (K - 1) // N
    last_obs = np.asarray(last_obs, dtype=float)[-p:]
    x = np.concatenate([[1.0], last_obs[::-1].reshape(-1)])
    return x @ post.Phi_bar


@dataclass
class ConjugateBVAR:
    """Conjugate BVAR with marginal-likelihood hyperparameters.

    ``fit`` estimates on a complete window; ``hyper`` is optimized unless
    supplied.
    """

    p: int = 6
    n_draws: int = 1000
    search: HyperSearch = field(default_factory=HyperSearch)
    hyper: ConjugateHyper | None = None
    posterior_: NIWPosterior | None = field(default=None, init=False, repr=False)

    def fit(self, window, phi_star=None, hyper: ConjugateHyper | None = None) -> "ConjugateBVAR":
        obj = ConjugateObjective(window, self.p, phi_star, None, self.search.lambda0)
        hyper = hyper or self.hyper
        if hyper is None:
            (l1, m1, m2), _ = maximize_log_grid(
                lambda th: obj(obj.hyper(*th)),
                [self.search.lambda1_bounds, self.search.mu1_bounds, self.search.mu2_bounds],
                self.search.grid_points,
                self.search.refine,
                self.search.max_iter,
            )
            hyper = obj.hyper(l1, m1, m2)
        self.hyper = hyper
        self.posterior_ = obj.posterior(hyper)
        data = np.asarray(getattr(window, "values", window), dtype=float)
        self._last = data[-self.p :]
        return self

    def forecast(self, H: int, rng) -> np.ndarray:
        return forecast(self.posterior_, self._last, H, rng, self.n_draws)
