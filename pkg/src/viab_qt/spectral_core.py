"""Spectral truncation of the state space: diagonal generator, semigroup,
and the closed-form convolution integrals behind exact one-step sampling.

The generator is diagonal with eigenvalues ``mu``, so the semigroup, the
drift convolution int_0^h S(r) v dr and the covariance of the semigroup-
filtered noise integral are all componentwise closed forms. Degenerate
eigenvalue combinations are handled by a short Taylor series so every
formula is continuous in mu.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import factor_psd_batch
from .errors import ConfigError, DegenerateCovarianceError

# exp(z) ~ 1 + z below this threshold; switch to the series form
_SERIES_THRESHOLD = 1e-8

# declared PSD jitter, relative to trace
COV_JITTER = 1e-12


@dataclass(frozen=True)
class SpectralSpace:
    """Truncated state space: n modes, m noise directions, d controls."""

    n: int
    mu: np.ndarray
    m: int
    d: int

    def __post_init__(self):
        mu = np.asarray(self.mu, dtype=float)
        object.__setattr__(self, "mu", mu)
        if self.n < 1 or self.m < 1 or self.d < 1:
            raise ConfigError("space dimensions must satisfy n, m, d >= 1")
        if mu.shape != (self.n,):
            raise ConfigError(f"mu must have shape ({self.n},), got {mu.shape}")
        if not np.all(np.isfinite(mu)):
            raise ConfigError("mu must be finite")

    @property
    def unstable(self) -> bool:
        """Flagged by experiments: some mode grows exponentially."""
        return bool(np.max(self.mu) > 0.0)


@dataclass(frozen=True)
class HSOperator:
    """Dense n x m noise coefficient; the Hilbert-Schmidt norm is Frobenius."""

    entries: np.ndarray = field(repr=False)

    def __post_init__(self):
        entries = np.atleast_2d(np.asarray(self.entries, dtype=float))
        object.__setattr__(self, "entries", entries)

    @property
    def hs_norm(self) -> float:
        return float(np.sqrt(np.sum(self.entries * self.entries)))


def hs_norm(gmat) -> float:
    """Frobenius norm of a noise coefficient (HSOperator or array)."""
    entries = gmat.entries if isinstance(gmat, HSOperator) else np.asarray(gmat, float)
    return float(np.sqrt(np.sum(entries * entries)))


def expm1_over(z: np.ndarray) -> np.ndarray:
    """(exp(z) - 1)/z, continuous through z = 0.

    Below the threshold uses the 3-term series 1 + z/2 + z^2/6.
    """
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    small = np.abs(z) < _SERIES_THRESHOLD
    zs = z[small]
    out[small] = 1.0 + zs / 2.0 + zs * zs / 6.0
    zb = z[~small]
    out[~small] = np.expm1(zb) / zb
    return out


def semigroup_apply(space: SpectralSpace, t: float, x: np.ndarray) -> np.ndarray:
    """Apply S(t) = diag(exp(mu_k t)) to x (last axis indexes modes)."""
    if t < 0:
        raise ValueError(f"semigroup time must be >= 0, got {t}")
    x = np.asarray(x, dtype=float)
    return np.exp(space.mu * t) * x


def drift_convolution(space: SpectralSpace, h: float, v: np.ndarray) -> np.ndarray:
    """int_0^h S(r) v dr for constant v: component k is v_k (e^{mu_k h}-1)/mu_k."""
    if h <= 0:
        raise ValueError(f"step length must be > 0, got {h}")
    v = np.asarray(v, dtype=float)
    return h * expm1_over(space.mu * h) * v


def noise_covariance(space: SpectralSpace, h: float, gmat) -> np.ndarray:
    """Covariance of int_t^{t+h} S(t+h-s) g dW_s for frozen g.

    C_jk = (g g^T)_jk (e^{(mu_j+mu_k) h} - 1)/(mu_j + mu_k); the degenerate
    combination mu_j + mu_k = 0 continues to h (g g^T)_jk.
    """
    if h <= 0:
        raise ValueError(f"step length must be > 0, got {h}")
    g = gmat.entries if isinstance(gmat, HSOperator) else np.asarray(gmat, float)
    gram = g @ g.T
    musum = space.mu[:, None] + space.mu[None, :]
    weights = h * expm1_over(musum * h)
    cov = gram * weights
    return 0.5 * (cov + cov.T)


def covariance_weights(space: SpectralSpace, h: float) -> np.ndarray:
    """The entrywise weights W_jk = (e^{(mu_j+mu_k) h}-1)/(mu_j+mu_k)."""
    musum = space.mu[:, None] + space.mu[None, :]
    return h * expm1_over(musum * h)


def cholesky_factor(cov: np.ndarray, jitter_rel: float = COV_JITTER) -> np.ndarray:
    """Lower-triangular factor of a PSD matrix, retrying once with jitter.

    Raises DegenerateCovarianceError when both attempts fail; callers fall
    back to eigendecomposition sampling (see sampling_factor).
    """
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    jitter = jitter_rel * np.trace(cov)
    try:
        return np.linalg.cholesky(cov + jitter * np.eye(cov.shape[0]))
    except np.linalg.LinAlgError:
        raise DegenerateCovarianceError(
            "covariance is not positive definite even after jitter"
        ) from None


def sampling_factor(cov: np.ndarray) -> np.ndarray:
    """Square-root factor L with L L^T = cov, for Gaussian sampling.

    Rank-deficient covariances (e.g. purely tangential noise) are routine,
    so after the jittered Cholesky attempt the kernel falls back to an
    eigendecomposition with negative eigenvalues clamped to zero. All
    sampling paths share this kernel, keeping results independent of the
    host BLAS.
    """
    cov = np.asarray(cov, dtype=float)
    factors, _ = factor_psd_batch(cov[None, :, :])
    return factors[0]


def sampling_factor_batch(covs: np.ndarray) -> np.ndarray:
    """Batched sampling_factor via the compiled kernel."""
    factors, _ = factor_psd_batch(covs)
    return factors
