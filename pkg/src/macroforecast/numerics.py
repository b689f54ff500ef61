"""Deterministic numerical kernels shared by the forecasting models."""

from __future__ import annotations

import warnings
import zlib
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import linalg, stats

from .errors import (
    DegenerateStatisticError,
    DimensionError,
    DomainError,
    FactorizationError,
    SingularityError,
    ValidationError,
)

JITTER_START = 1e-12
JITTER_MAX = 1e-6


class ConvergenceWarning(UserWarning):
    pass


@dataclass(frozen=True)
class CholeskyFactor:
    lower: np.ndarray
    jitter_applied: float = 0.0

    def logdet(self) -> float:
        return 2.0 * float(np.sum(np.log(np.diag(self.lower))))

    def solve(self, b: np.ndarray) -> np.ndarray:
        return linalg.cho_solve((self.lower, True), b)


def cholesky(a: np.ndarray) -> CholeskyFactor:
    """Lower Cholesky factor with jitter escalation.

    Tries the plain factorization first, then adds ``j * mean(diag)`` to the
    diagonal for j = 1e-12, 1e-11, ..., 1e-6 before giving up.
    """
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"cholesky needs a square matrix, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise FactorizationError("matrix has non-finite entries")
    a = 0.5 * (a + a.T)
    scale = float(np.mean(np.abs(np.diag(a)))) or 1.0
    jitter = 0.0
    eye = np.eye(a.shape[0])
    while True:
        try:
            lower = linalg.cholesky(a + jitter * scale * eye, lower=True)
            if np.all(np.diag(lower) > 0):
                return CholeskyFactor(lower, jitter * scale)
        except linalg.LinAlgError:
            pass
        jitter = JITTER_START if jitter == 0.0 else jitter * 10
        if jitter > JITTER_MAX * 1.0000001:
            raise FactorizationError("matrix is not positive definite within jitter tolerance")


class OLSResult(NamedTuple):
    coef: np.ndarray
    resid: np.ndarray
    sigma2: np.ndarray


def ols(X: np.ndarray, Y: np.ndarray) -> OLSResult:
    """Column-wise least squares of ``Y`` on ``X``.

    ``sigma2`` uses the T - K denominator (NaN when T == K).
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    T, K = X.shape
    if Y.shape[0] != T:
        raise DimensionError(f"X has {T} rows but Y has {Y.shape[0]}")
    if T < K:
        raise DimensionError(f"need T >= K, got T={T}, K={K}")
    coef, _, rank, sv = np.linalg.lstsq(X, Y, rcond=None)
    if rank < K or sv[-1] <= sv[0] * 1e-12:
        raise SingularityError(f"regressor matrix is rank deficient (rank {rank} < {K})")
    resid = Y - X @ coef
    dof = T - K
    with np.errstate(invalid="ignore", divide="ignore"):
        sigma2 = np.sum(resid**2, axis=0) / dof if dof > 0 else np.full(np.shape(Y)[1:], np.nan)
    return OLSResult(coef, resid, sigma2)


def standardize(Z: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Column standardization (population std). Returns (Zs, mean, std)."""
    Z = np.asarray(Z, dtype=float)
    mu = Z.mean(axis=0)
    sd = Z.std(axis=0)
    if np.any(sd <= 0):
        raise DegenerateStatisticError("column with zero variance cannot be standardized")
    return (Z - mu) / sd, mu, sd


class PCAResult(NamedTuple):
    factors: np.ndarray
    loadings: np.ndarray
    eigvals: np.ndarray


def principal_components(Z: np.ndarray, k: int) -> PCAResult:
    """First ``k`` principal components of an already standardized matrix.

    Loadings are the orthonormal eigenvectors of Z'Z/T, factors = Z @ loadings
    and eigvals the matching eigenvalues (descending). Each loading vector is
    signed so its first entry is nonnegative (largest entry if the first is 0).
    """
    Z = np.asarray(Z, dtype=float)
    T, N = Z.shape
    if k < 1 or k > min(T, N):
        raise DimensionError(f"k={k} must be in 1..{min(T, N)}")
    _, s, vt = np.linalg.svd(Z, full_matrices=False)
    tol = s[0] * max(T, N) * np.finfo(float).eps if s.size else 0.0
    if s[k - 1] <= tol:
        raise DimensionError(f"k={k} exceeds the numerical rank of the data")
    loadings = vt[:k].T.copy()
    for c in range(k):
        v = loadings[:, c]
        ref = v[0] if abs(v[0]) > 1e-12 else v[np.argmax(np.abs(v))]
        if ref < 0:
            loadings[:, c] = -v
    factors = Z @ loadings
    return PCAResult(factors, loadings, s[:k] ** 2 / T)


def em_balance(
    values: np.ndarray,
    k: int = 1,
    tol: float = 1e-6,
    max_iter: int = 500,
) -> np.ndarray:
    """Fill missing cells with a k-factor approximation (Stock-Watson EM).

    Each iteration standardizes the current completed panel, fits ``k``
    principal components, and replaces the missing cells by the fitted values
    (in original units). Stops when the relative change of the imputed values
    drops below ``tol``; at ``max_iter`` a ConvergenceWarning is issued and the
    last iterate returned. Observed cells are never modified.
    """
    X = np.array(getattr(values, "values", values), dtype=float)
    miss = np.isnan(X)
    if not miss.any():
        return X
    n_obs = (~miss).sum(axis=0)
    if np.any(n_obs < 2):
        bad = np.flatnonzero(n_obs < 2).tolist()
        raise ValidationError(f"columns {bad} have fewer than 2 observed values")
    col_mean = np.nanmean(X, axis=0)
    filled = np.where(miss, col_mean, X)
    prev = filled[miss]
    for it in range(max_iter):
        mu = filled.mean(axis=0)
        sd = filled.std(axis=0)
        sd[sd <= 0] = 1.0
        Z = (filled - mu) / sd
        pc = principal_components(Z, k)
        fit = pc.factors @ pc.loadings.T * sd + mu
        filled[miss] = fit[miss]
        cur = filled[miss]
        denom = np.linalg.norm(prev)
        change = np.linalg.norm(cur - prev) / (denom if denom > 0 else 1.0)
        prev = cur
        if change < tol:
            return filled
    warnings.warn(f"EM did not converge in {max_iter} iterations", ConvergenceWarning, stacklevel=2)
    return filled


def bic(rss: float, T: int, k_params: int) -> float:
    """T ln(rss/T) + k ln T."""
    if T <= 0:
        raise DomainError("BIC needs T > 0")
    if not rss > 0:
        raise DomainError(f"BIC needs rss > 0, got {rss}")
    return T * np.log(rss / T) + k_params * np.log(T)


def partial_autocorr_lag1(series) -> float:
    """Lag-one partial autocorrelation, via OLS of y_t on (1, y_{t-1}).

    Pairs with a missing value on either side are dropped.
    """
    y = np.asarray(series, dtype=float)
    cur, lag = y[1:], y[:-1]
    ok = ~(np.isnan(cur) | np.isnan(lag))
    if np.count_nonzero(~np.isnan(y)) < 3 or ok.sum() < 2:
        raise DegenerateStatisticError("partial autocorrelation needs at least 3 observations")
    cur, lag = cur[ok], lag[ok]
    lag_c = lag - lag.mean()
    ss = float(lag_c @ lag_c)
    if ss <= 1e-300 * max(1, len(lag)) or np.ptp(y[~np.isnan(y)]) == 0:
        raise DegenerateStatisticError("partial autocorrelation undefined for a constant series")
    return float(lag_c @ (cur - cur.mean()) / ss)


@dataclass(frozen=True)
class RngStream:
    """Seed plus stream id; each pair gives an independent reproducible generator."""

    seed: int
    stream: int = 0

    def generator(self) -> np.random.Generator:
        ss = np.random.SeedSequence(entropy=int(self.seed) & (2**64 - 1), spawn_key=(int(self.stream),))
        return np.random.Generator(np.random.PCG64(ss))

    @classmethod
    def keyed(cls, seed: int, *parts) -> "RngStream":
        """Stream whose id is a stable digest of ``parts`` (e.g. origin, model)."""
        key = "|".join(str(p) for p in parts).encode()
        return cls(seed, zlib.crc32(key))


def _as_generator(rng) -> np.random.Generator:
    if isinstance(rng, RngStream):
        return rng.generator()
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_inverse_wishart(scale: np.ndarray, df: float, n_draws: int, rng) -> np.ndarray:
    """Draws of Sigma ~ IW(scale, df) with mean scale / (df - N - 1).

    Bartlett construction on the Wishart(scale^-1, df) precision.
    """
    gen = _as_generator(rng)
    scale = np.asarray(scale, dtype=float)
    N = scale.shape[0]
    if df <= N - 1:
        raise ValidationError(f"degrees of freedom {df} must exceed N - 1 = {N - 1}")
    chol_s = cholesky(scale).lower
    # precision = C A A' C' with C = chol(scale^-1); take C = inv(chol_s)'
    c_mat = linalg.solve_triangular(chol_s, np.eye(N), lower=True).T
    A = np.zeros((n_draws, N, N))
    dfs = df - np.arange(N)
    A[:, np.arange(N), np.arange(N)] = np.sqrt(gen.chisquare(dfs, size=(n_draws, N)))
    il = np.tril_indices(N, -1)
    A[:, il[0], il[1]] = gen.standard_normal((n_draws, len(il[0])))
    # Sigma = (C A A' C')^-1 = C'^-1 A'^-1 A^-1 C^-1 ; C'^-1 = chol_s'^{-1}'... use G = C A
    G = np.einsum("ij,njk->nik", c_mat, A)
    Ginv = np.linalg.inv(G)
    return np.einsum("nji,njk->nik", Ginv, Ginv)


def sample_matric_normal_iw(post, rng, n_draws: int) -> tuple[np.ndarray, np.ndarray]:
    """Joint draws (Phi, Sigma) from a Normal-inverse-Wishart posterior.

    ``post`` needs ``Phi_bar`` (K x N), ``Omega_bar`` (K x K), ``S_bar`` and
    ``v_bar``. Sigma ~ IW(S_bar, v_bar); Phi | Sigma is matric-normal with row
    covariance Omega_bar and column covariance Sigma, i.e.
    cov(vec Phi) = Sigma kron Omega_bar. Returns arrays of shape
    (n_draws, K, N) and (n_draws, N, N).
    """
    gen = _as_generator(rng)
    K, N = post.Phi_bar.shape
    if post.v_bar <= N + 1:
        raise ValidationError(f"v_bar={post.v_bar} must exceed N + 1 = {N + 1}")
    sigmas = sample_inverse_wishart(post.S_bar, post.v_bar, n_draws, gen)
    l_omega = cholesky(post.Omega_bar).lower
    Z = gen.standard_normal((n_draws, K, N))
    l_sig = np.linalg.cholesky(sigmas)
    phis = post.Phi_bar + (l_omega @ Z) @ np.swapaxes(l_sig, 1, 2)
    return phis, sigmas


def two_sided_normal_pvalue(stat: float) -> float:
    return float(2.0 * stats.norm.sf(abs(stat)))
