"""Stationary Gaussian-process machinery: Matern covariance, kriging
prediction, marginal likelihood, and grid field simulation.

Distances are Euclidean in grid-cell units (the grid is unit spaced).
All functions are pure; covariance factorizations for full grids are
memoized on (shape, kernel) since the kernel never changes mid-campaign.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable, Sequence, Union

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

JITTER = 1e-10
SUPPORTED_ORDERS = (0.5, 1.5, 2.5)

MeanLike = Union[float, Callable[[np.ndarray], np.ndarray]]


class SingularCovarianceError(RuntimeError):
    """Covariance matrix could not be factorized (e.g. duplicate noise-free
    observation locations)."""


@dataclass(frozen=True)
class KernelParams:
    """Matern kernel: marginal std, correlation length (cells), and order."""

    marginal_std: float = 0.1
    correlation_length: float = 3.0
    smoothness: float = 1.5

    def __post_init__(self) -> None:
        if self.marginal_std <= 0:
            raise ValueError(f"marginal_std must be > 0, got {self.marginal_std}")
        if self.correlation_length <= 0:
            raise ValueError(
                f"correlation_length must be > 0, got {self.correlation_length}"
            )
        if self.smoothness not in SUPPORTED_ORDERS:
            raise ValueError(
                f"smoothness must be one of {SUPPORTED_ORDERS}, got {self.smoothness}"
            )


@dataclass
class GpObservationSet:
    """Point observations of one scalar field with homoscedastic noise."""

    locations: np.ndarray  # (n, 2) grid coordinates
    values: np.ndarray  # (n,)
    noise_std: float = 0.0

    def __post_init__(self) -> None:
        self.locations = np.atleast_2d(np.asarray(self.locations, dtype=float))
        self.values = np.atleast_1d(np.asarray(self.values, dtype=float))
        if self.locations.size == 0:
            self.locations = self.locations.reshape(0, 2)
        if self.locations.shape[0] != self.values.shape[0]:
            raise ValueError("locations and values must have equal length")
        if self.locations.shape[0] and self.locations.shape[1] != 2:
            raise ValueError("locations must be (n, 2)")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("observation values must be finite")
        if self.noise_std < 0:
            raise ValueError(f"noise_std must be >= 0, got {self.noise_std}")

    def __len__(self) -> int:
        return self.values.shape[0]


def matern_cov(d, k: KernelParams):
    """Matern covariance at lag ``d`` (grid cells), vectorized over ``d``.

    Equals ``marginal_std**2`` at d=0 and decays monotonically; order is one
    of 1/2, 3/2, 5/2.
    """
    d = np.asarray(d, dtype=float)
    if np.any(d < 0):
        raise ValueError("distance must be non-negative")
    r = d / k.correlation_length
    s2 = k.marginal_std**2
    if k.smoothness == 0.5:
        out = s2 * np.exp(-r)
    elif k.smoothness == 1.5:
        a = math.sqrt(3.0) * r
        out = s2 * (1.0 + a) * np.exp(-a)
    else:  # 2.5
        a = math.sqrt(5.0) * r
        out = s2 * (1.0 + a + a * a / 3.0) * np.exp(-a)
    return out


def kernel_matrix(xa: np.ndarray, xb: np.ndarray, k: KernelParams) -> np.ndarray:
    """Cross-covariance matrix between two location sets (na, 2), (nb, 2)."""
    xa = np.atleast_2d(np.asarray(xa, dtype=float))
    xb = np.atleast_2d(np.asarray(xb, dtype=float))
    d = np.sqrt(
        np.maximum(
            ((xa[:, None, :] - xb[None, :, :]) ** 2).sum(axis=-1),
            0.0,
        )
    )
    return matern_cov(d, k)


def _mean_at(mean_fn: MeanLike, locations: np.ndarray) -> np.ndarray:
    n = locations.shape[0]
    if callable(mean_fn):
        m = np.asarray(mean_fn(locations), dtype=float)
        return np.broadcast_to(m, (n,)).copy()
    return np.full(n, float(mean_fn))


def _obs_cho(obs: GpObservationSet, k: KernelParams):
    """Cholesky factor of K(obs, obs) + (noise^2 + jitter) I."""
    if obs.noise_std == 0.0 and len(obs) > 1:
        uniq = np.unique(obs.locations, axis=0)
        if uniq.shape[0] < len(obs):
            raise SingularCovarianceError(
                "duplicate noise-free observation locations make the "
                "covariance singular"
            )
    K = kernel_matrix(obs.locations, obs.locations, k)
    K[np.diag_indices_from(K)] += obs.noise_std**2 + JITTER
    try:
        return cho_factor(K, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SingularCovarianceError(
            f"observation covariance is not positive definite "
            f"({len(obs)} observations, noise_std={obs.noise_std}): {exc}"
        ) from exc


def krige_predict(
    obs: GpObservationSet,
    query: np.ndarray,
    mean_fn: MeanLike,
    k: KernelParams,
):
    """GP posterior mean and pointwise variance at the query locations.

    With no observations this returns the prior: (mean_fn(query),
    marginal_std**2). Variances are clamped to [0, marginal_std**2].
    """
    query = np.atleast_2d(np.asarray(query, dtype=float))
    mu0 = _mean_at(mean_fn, query)
    s2 = k.marginal_std**2
    if len(obs) == 0:
        return mu0, np.full(query.shape[0], s2)
    cho = _obs_cho(obs, k)
    resid = obs.values - _mean_at(mean_fn, obs.locations)
    K_qo = kernel_matrix(query, obs.locations, k)
    mu = mu0 + K_qo @ cho_solve(cho, resid)
    # var(q) = s2 - || L^-1 K(obs, q) ||^2
    half = solve_triangular(cho[0], K_qo.T, lower=True)
    var = s2 - np.einsum("ij,ij->j", half, half)
    return mu, np.clip(var, 0.0, s2)


def gp_log_marginal(obs: GpObservationSet, mean_fn: MeanLike, k: KernelParams) -> float:
    """Log marginal likelihood log N(values; mean, K + noise^2 I); 0 if empty."""
    n = len(obs)
    if n == 0:
        return 0.0
    cho = _obs_cho(obs, k)
    resid = obs.values - _mean_at(mean_fn, obs.locations)
    alpha = cho_solve(cho, resid)
    logdet = 2.0 * np.sum(np.log(np.diag(cho[0])))
    return float(-0.5 * (resid @ alpha + logdet + n * math.log(2.0 * math.pi)))


def grid_locations(shape: tuple[int, int]) -> np.ndarray:
    """Cell-center coordinates of a (rows, cols) grid, row-major (N, 2)."""
    rr, cc = np.meshgrid(np.arange(shape[0]), np.arange(shape[1]), indexing="ij")
    return np.column_stack([rr.ravel(), cc.ravel()]).astype(float)


@lru_cache(maxsize=8)
def _grid_chol(shape: tuple[int, int], k: KernelParams) -> np.ndarray:
    locs = grid_locations(shape)
    K = kernel_matrix(locs, locs, k)
    K[np.diag_indices_from(K)] += JITTER
    return np.linalg.cholesky(K)

def draw_grid_fields(
    shape: tuple[int, int], k: KernelParams, rng: np.random.Generator, n: int = 1
) -> np.ndarray:
    """n independent zero-mean stationary field draws, shape (n, rows, cols)."""
    L = _grid_chol(shape, k)
    z = rng.standard_normal((L.shape[0], n))
    return (L @ z).T.reshape(n, *shape)


def conditional_grid_draws(
    obs: GpObservationSet,
    mean_grid: np.ndarray,
    k: KernelParams,
    rng: np.random.Generator,
    n: int = 1,
) -> np.ndarray:
    """n draws of the full-grid field conditioned on ``obs``.

    Uses residual conditioning: an unconditional draw is corrected by kriging
    the mismatch between the real and simulated values at the observation
    locations, which yields exact posterior samples at every grid cell.
    """
    shape = mean_grid.shape
    base = draw_grid_fields(shape, k, rng, n)
    if len(obs) == 0:
        return mean_grid[None, :, :] + base
    cho = _obs_cho(obs, k)
    locs = obs.locations.astype(int)
    sim_at_obs = base[:, locs[:, 0], locs[:, 1]]
    if obs.noise_std > 0:
        sim_at_obs = sim_at_obs + rng.normal(0.0, obs.noise_std, sim_at_obs.shape)
    mean_at_obs = mean_grid[locs[:, 0], locs[:, 1]]
    mismatch = obs.values[None, :] - mean_at_obs[None, :] - sim_at_obs  # (n, m)
    K_go = kernel_matrix(grid_locations(shape), obs.locations, k)
    corr = K_go @ cho_solve(cho, mismatch.T)  # (N, n)
    return mean_grid[None, :, :] + base + corr.T.reshape(n, *shape)


def sequential_condition(
    locations: Sequence,
    values: np.ndarray,
    query: np.ndarray,
    mean_fn: MeanLike,
    k: KernelParams,
    noise_std: float,
):
    """Condition on observations one at a time via exact Gaussian updates.

    Maintains the joint covariance over (observations + query) and applies
    rank-one conditioning per observation; used as an independent cross-check
    of the joint kriging solve.
    """
    locations = np.atleast_2d(np.asarray(locations, dtype=float))
    query = np.atleast_2d(np.asarray(query, dtype=float))
    pts = np.vstack([locations, query])
    mu = _mean_at(mean_fn, pts)
    C = kernel_matrix(pts, pts, k)
    nobs = locations.shape[0]
    for i in range(nobs):
        v = C[:, i].copy()
        denom = C[i, i] + noise_std**2 + JITTER
        gain = v / denom
        mu = mu + gain * (values[i] - mu[i])
        C = C - np.outer(gain, v)
    return mu[nobs:], np.clip(np.diag(C)[nobs:], 0.0, None)
