"""Bayesian VAR with the asymmetric conjugate prior.

The VAR is written in structural form A y_t = b + B_1 y_{t-1} + ... + u_t with
A unit lower triangular and D = cov(u_t) diagonal. Equation i reads

    y_{i,t} = -y_{1..i-1,t} alpha_i + x_t beta_i + u_{i,t},

and each equation carries an independent Normal-inverse-gamma prior, so the
posterior and the marginal likelihood factorize across equations. Own and
cross lags get separate tightness parameters (kappa1, kappa2).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import linalg
from scipy.special import gammaln

from .bvar import (
    LEVEL_TCODES,
    HyperSearch,
    ar_scales,
    build_design,
    maximize_log_grid,
    simulate_paths,
)
from .errors import DimensionError, ScaleError, ValidationError
from .numerics import _as_generator, cholesky


@dataclass(frozen=True)
class AsymmetricHyper:
    kappa1: float = 0.04
    kappa2: float = 0.0016
    kappa3: float = 100.0
    v0: float | None = None  # None: N + 2

    def __post_init__(self):
        if not (self.kappa1 > 0 and self.kappa2 > 0 and self.kappa3 > 0):
            raise ValidationError("kappa1, kappa2, kappa3 must be positive")


@dataclass(frozen=True)
class StructuralEquation:
    """One draw (or point value) of the i-th structural equation."""

    index: int
    alpha: np.ndarray
    beta: np.ndarray
    sigma2: float


@dataclass(frozen=True)
class EquationPrior:
    index: int
    mean: np.ndarray  # (alpha, beta) stacked
    var: np.ndarray  # diagonal of V, coefficients are N(mean, sigma2 * diag(var))
    shape: float
    scale: float

    @property
    def n_alpha(self) -> int:
        return self.index


@dataclass(frozen=True)
class EquationPosterior:
    index: int
    mean: np.ndarray
    precision: np.ndarray  # K_i = V^-1 + Z'Z; coefficient cov = sigma2 * K_i^-1
    shape: float
    scale: float
    log_ml: float

    @property
    def alpha(self) -> np.ndarray:
        return self.mean[: self.index]

    @property
    def beta(self) -> np.ndarray:
        return self.mean[self.index :]


def equation_prior(
    i: int,
    hyper: AsymmetricHyper,
    s2,
    p: int,
    tcodes: Sequence[int] | None = None,
    level: Sequence[bool] | None = None,
) -> EquationPrior:
    """Prior moments for equation ``i`` (0-based).

    beta variances: kappa1 / (l^2 s_i^2) for own lag l, kappa2 / (l^2 s_j^2)
    for lag l of another variable j, kappa3 for the intercept. alpha_{i,j}
    has variance 1 / s_j^2 (times sigma_i^2). sigma_i^2 ~
    IG((v0 + i + 1 - N) / 2, s_i^2 / 2). The prior mean is zero except the
    first own lag, which is one for series in levels or log levels.
    """
    s2 = np.asarray(s2, dtype=float)
    N = s2.size
    if not 0 <= i < N:
        raise DimensionError(f"equation index {i} outside 0..{N - 1}")
    if np.any(~(s2 > 0)):
        raise ScaleError("s^2 scales must be positive")
    if level is None:
        level = [c in LEVEL_TCODES for c in tcodes] if tcodes is not None else [False] * N
    v0 = N + 2 if hyper.v0 is None else hyper.v0
    K = N * p + 1
    var = np.empty(i + K)
    var[:i] = 1.0 / s2[:i]
    var[i] = hyper.kappa3
    for l in range(1, p + 1):
        block = hyper.kappa2 / (l**2 * s2)
        block[i] = hyper.kappa1 / (l**2 * s2[i])
        var[i + 1 + (l - 1) * N : i + 1 + l * N] = block
    mean = np.zeros(i + K)
    if level[i]:
        mean[i + 1 + i] = 1.0
    shape = 0.5 * (v0 + (i + 1) - N)
    if shape <= 0:
        raise ValidationError(f"prior shape for equation {i} is not positive (v0={v0}, N={N})")
    return EquationPrior(i, mean, var, shape, 0.5 * s2[i])


def _fit_from_moments(prior: EquationPrior, ZtZ, Zty, yty, T) -> EquationPosterior:
    v_inv = 1.0 / prior.var
    prec = ZtZ + np.diag(v_inv)
    cf = cholesky(prec)
    mean = cf.solve(v_inv * prior.mean + Zty)
    dev = mean - prior.mean
    rss = yty - 2.0 * mean @ Zty + mean @ ZtZ @ mean
    scale = prior.scale + 0.5 * (rss + dev @ (v_inv * dev))
    shape = prior.shape + 0.5 * T
    log_ml = (
        -0.5 * T * np.log(2.0 * np.pi)
        - 0.5 * float(np.sum(np.log(prior.var)))
        - 0.5 * cf.logdet()
        + prior.shape * np.log(prior.scale)
        - shape * np.log(scale)
        + gammaln(shape)
        - gammaln(prior.shape)
    )
    return EquationPosterior(prior.index, mean, prec, float(shape), float(scale), float(log_ml))


def fit_equation(y, Z, prior: EquationPrior) -> EquationPosterior:
    """Normal-inverse-gamma update for one equation with regressors Z = [W, X]."""
    y = np.asarray(y, dtype=float)
    Z = np.asarray(Z, dtype=float)
    if Z.shape != (y.size, prior.mean.size):
        raise DimensionError(f"regressors {Z.shape} do not match prior of size {prior.mean.size}")
    return _fit_from_moments(prior, Z.T @ Z, Z.T @ y, float(y @ y), y.size)


def equation_regressors(Y: np.ndarray, X: np.ndarray, i: int) -> np.ndarray:
    return np.hstack([-Y[:, :i], X])


def structural_to_reduced(A: np.ndarray, B: np.ndarray, D) -> tuple[np.ndarray, np.ndarray]:
    """Map (A, [b B_1 ... B_p], D) to the reduced form.

    ``B`` is N x K (row i = beta_i). Returns Phi (K x N, so that
    y_t' = x_t' Phi) and Sigma = A^-1 D A^-1'.
    """
    A = np.asarray(A, dtype=float)
    D = np.diag(D) if np.ndim(D) == 1 else np.asarray(D, dtype=float)
    A_inv_B = linalg.solve_triangular(A, B, lower=True, unit_diagonal=True)
    A_inv = linalg.solve_triangular(A, np.eye(A.shape[0]), lower=True, unit_diagonal=True)
    return A_inv_B.T, A_inv @ D @ A_inv.T


def reduced_to_structural(Phi: np.ndarray, Sigma: np.ndarray):
    """Inverse of :func:`structural_to_reduced` via the LDL' factorization of Sigma."""
    C = cholesky(Sigma).lower
    d = np.diag(C)
    L = C / d
    A = linalg.solve_triangular(L, np.eye(L.shape[0]), lower=True, unit_diagonal=True)
    return A, A @ Phi.T, d**2


def split_reduced(Phi: np.ndarray, p: int):
    """(Phi_c, [Phi_1, ..., Phi_p]) from the stacked K x N matrix."""
    N = Phi.shape[1]
    return Phi[0], [Phi[1 + l * N : 1 + (l + 1) * N].T for l in range(p)]


@dataclass
class AsymmetricPosterior:
    equations: list[EquationPosterior]
    p: int

    @property
    def N(self) -> int:
        return len(self.equations)

    @property
    def log_ml(self) -> float:
        return float(sum(e.log_ml for e in self.equations))

    def point_structural(self) -> list[StructuralEquation]:
        return [
            StructuralEquation(e.index, e.alpha, e.beta, e.scale / (e.shape - 1) if e.shape > 1 else np.nan)
            for e in self.equations
        ]

    def sample_reduced(self, rng, n_draws: int) -> tuple[np.ndarray, np.ndarray]:
        """Posterior draws mapped to reduced form: Phi (D, K, N), Sigma (D, N, N)."""
        gen = _as_generator(rng)
        N = self.N
        K = N * self.p + 1
        A = np.tile(np.eye(N), (n_draws, 1, 1))
        B = np.empty((n_draws, N, K))
        d = np.empty((n_draws, N))
        for e in self.equations:
            i = e.index
            sig2 = e.scale / gen.gamma(e.shape, 1.0, size=n_draws)
            L = cholesky(e.precision).lower
            z = gen.standard_normal((e.mean.size, n_draws))
            coef = e.mean[:, None] + linalg.solve_triangular(L.T, z, lower=False) * np.sqrt(sig2)
            A[:, i, :i] = coef[:i].T
            B[:, i] = coef[i:].T
            d[:, i] = sig2
        # batched version of structural_to_reduced
        A_inv = np.linalg.inv(A)
        phis = np.swapaxes(A_inv @ B, 1, 2)
        sigmas = (A_inv * d[:, None, :]) @ np.swapaxes(A_inv, 1, 2)
        return phis, 0.5 * (sigmas + np.swapaxes(sigmas, 1, 2))

    def reduced_mean(self) -> np.ndarray:
        """Reduced-form Phi evaluated at the posterior means of (alpha, beta)."""
        N = self.N
        A = np.eye(N)
        B = np.empty((N, N * self.p + 1))
        for e in self.equations:
            A[e.index, : e.index] = e.alpha
            B[e.index] = e.beta
        return structural_to_reduced(A, B, np.ones(N))[0]


class AsymmetricObjective:
    """Summed per-equation log marginal likelihood for a fixed window."""

    def __init__(self, window, p: int, tcodes=None, sigma_hat=None, kappa3: float = 100.0):
        data = np.asarray(getattr(window, "values", window), dtype=float)
        self.design = build_design(data, p)
        self.p = p
        self.N = self.design.N
        if tcodes is None:
            tcodes = getattr(window, "tcodes", None)
        self.level = [c in LEVEL_TCODES for c in tcodes] if tcodes is not None else [False] * self.N
        sigma_hat = ar_scales(data, p) if sigma_hat is None else np.asarray(sigma_hat, float)
        # v0 = N + 2 gives (v0 - N - 1) sigma_hat^2 = sigma_hat^2
        self.s2 = sigma_hat**2
        self.kappa3 = kappa3
        Y, X = self.design.Y, self.design.X
        Q = np.hstack([-Y, X])
        self.QtQ = Q.T @ Q
        self.QtY = Q.T @ Y
        self.yty = np.einsum("ti,ti->i", Y, Y)

    def _idx(self, i):
        N, K = self.N, self.design.K
        return np.concatenate([np.arange(i), N + np.arange(K)])

    def equation(self, i: int, hyper: AsymmetricHyper) -> EquationPosterior:
        prior = equation_prior(i, hyper, self.s2, self.p, level=self.level)
        idx = self._idx(i)
        return _fit_from_moments(prior, self.QtQ[np.ix_(idx, idx)], self.QtY[idx, i], self.yty[i], self.design.T)

    def hyper(self, kappa1, kappa2) -> AsymmetricHyper:
        return AsymmetricHyper(kappa1=kappa1, kappa2=kappa2, kappa3=self.kappa3)

    def posterior(self, hyper: AsymmetricHyper, order: Sequence[int] | None = None) -> AsymmetricPosterior:
        order = range(self.N) if order is None else order
        fitted = {i: self.equation(i, hyper) for i in order}
        return AsymmetricPosterior([fitted[i] for i in range(self.N)], self.p)

    def __call__(self, hyper: AsymmetricHyper) -> float:
        return sum(self.equation(i, hyper).log_ml for i in range(self.N))


def optimize_kappas(window, p: int, search: HyperSearch | None = None, tcodes=None, sigma_hat=None,
                    bounds=((1e-4, 10.0), (1e-4, 10.0))) -> AsymmetricHyper:
    """argmax over (kappa1, kappa2) of the summed equation log marginal likelihoods."""
    search = search or HyperSearch()
    obj = AsymmetricObjective(window, p, tcodes, sigma_hat)
    (k1, k2), _ = maximize_log_grid(
        lambda th: obj(obj.hyper(*th)), list(bounds), search.grid_points, search.refine, search.max_iter
    )
    return obj.hyper(k1, k2)


def forecast_asymmetric(post: AsymmetricPosterior, last_obs, H: int, rng, n_draws: int = 1000) -> np.ndarray:
    """Point forecasts (H x N) from simulated reduced-form predictive paths."""
    if H < 1 or n_draws < 1:
        raise ValidationError("H and n_draws must be >= 1")
    gen = _as_generator(rng)
    phis, sigmas = post.sample_reduced(gen, n_draws)
    mean, _ = simulate_paths(phis, sigmas, last_obs, H, gen)
    return mean


@dataclass
class AsymmetricBVAR:
    p: int = 6
    n_draws: int = 1000
    search: HyperSearch = field(default_factory=HyperSearch)
    kappa_bounds: tuple = ((1e-4, 10.0), (1e-4, 10.0))
    hyper: AsymmetricHyper | None = None
    posterior_: AsymmetricPosterior | None = field(default=None, init=False, repr=False)

    def fit(self, window, tcodes=None, hyper: AsymmetricHyper | None = None) -> "AsymmetricBVAR":
        obj = AsymmetricObjective(window, self.p, tcodes)
        hyper = hyper or self.hyper
        if hyper is None:
            (k1, k2), _ = maximize_log_grid(
                lambda th: obj(obj.hyper(*th)),
                list(self.kappa_bounds),
                self.search.grid_points,
                self.search.refine,
                self.search.max_iter,
            )
            hyper = obj.hyper(k1, k2)
        self.hyper = hyper
        self.posterior_ = obj.posterior(hyper)
        self._last = np.asarray(getattr(window, "values", window), dtype=float)[-self.p :]
        return self

    def forecast(self, H: int, rng) -> np.ndarray:
        return forecast_asymmetric(self.posterior_, self._last, H, rng, self.n_draws)
