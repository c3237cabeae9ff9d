"""Exact one-step sampling and the exponential-Euler mild integrator.

With a diagonal generator the one-step law under frozen coefficients is an
exact Gaussian: mean S(h) xi + Phi(h) f(xi, u) and the closed-form
covariance of the semigroup-filtered noise integral. The integrator applies
the same closed forms per step with coefficients refreshed at the current
state, so it is exact in distribution per step for frozen coefficients and
carries no additional scheme bias into the tangency estimates.

``coupled_step_samples`` draws the frozen endpoint together with a
true-dynamics endpoint driven by the same normal increments (substepped);
the pair underlies both the tangency residual and the approximate-solution
builder. For state-independent coefficients the two endpoints coincide by
construction.
"""

from dataclasses import dataclass, field

import numpy as np

from ._kernels import sqrt_psd_batch
from .errors import BlowUpError, ConfigError
from .spectral_core import (SpectralSpace, covariance_weights,
                            drift_convolution, expm1_over, noise_covariance,
                            sampling_factor, sampling_factor_batch,
                            semigroup_apply)
from .streams import as_generator, substream
from .system_model import CoefficientModel, eval_drift, eval_noise

BLOWUP_THRESHOLD = 1e12


@dataclass(frozen=True)
class OneStepLaw:
    """Gaussian law of the frozen-coefficient one-step endpoint."""

    mean: np.ndarray
    covariance: np.ndarray
    h: float
    control: np.ndarray


@dataclass(frozen=True)
class Trajectory:
    """Ensemble of sample paths on a uniform grid.

    states has shape (paths, steps + 1, n); controls is (steps, d) when the
    strategy is shared across paths and (paths, steps, d) otherwise.
    """

    times: np.ndarray
    states: np.ndarray = field(repr=False)
    controls: np.ndarray = field(repr=False)
    seed: int
    stream_label: str


def one_step_law(space: SpectralSpace, model: CoefficientModel, xi, u,
                 h: float) -> OneStepLaw:
    """Exact law of the one-step endpoint with coefficients frozen at xi."""
    if h <= 0:
        raise ValueError(f"step length must be > 0, got {h}")
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    f = eval_drift(model, xi, u)
    g = eval_noise(model, xi, u)
    mean = semigroup_apply(space, h, xi) + drift_convolution(space, h, f)
    cov = noise_covariance(space, h, g)
    return OneStepLaw(mean=mean, covariance=cov, h=float(h), control=u)


def sample_one_step(law: OneStepLaw, count: int, rng_stream) -> np.ndarray:
    """Monte Carlo endpoints of the frozen one-step law.

    Deterministic per stream id: passing the same id (or generator state)
    twice yields identical matrices.
    """
    if count < 1:
        raise ValueError("sample count must be >= 1")
    rng = as_generator(rng_stream, "one-step")
    n = law.mean.shape[0]
    L = sampling_factor(law.covariance)
    z = rng.standard_normal((count, n))
    return law.mean + z @ L.T


def _batch_cov_factors(g_batch: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Cholesky-first factors of per-sample covariances (g g^T) o weights."""
    covs = np.einsum("bij,bkj->bik", g_batch, g_batch) * weights
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return sampling_factor_batch(covs)


def _batch_cov_roots(g_batch: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """Symmetric square roots of per-sample covariances.

    The coupled frozen/flow draw must map the shared normals through a
    factor that varies continuously with the state; Cholesky or
    eigenvector factors carry arbitrary sign conventions that decorrelate
    nearby states, the symmetric root does not.
    """
    covs = np.einsum("bij,bkj->bik", g_batch, g_batch) * weights
    covs = 0.5 * (covs + covs.transpose(0, 2, 1))
    return sqrt_psd_batch(covs)


def required_substeps(model: CoefficientModel, substeps: int) -> int:
    return 1 if not model.state_dependent else max(1, int(substeps))


def coupled_step_samples(space: SpectralSpace, model: CoefficientModel,
                         xi, u, h: float, count: int, rng=None,
                         substeps: int = 8, normals=None):
    """Draw coupled (frozen endpoint, true-flow endpoint) samples.

    xi may be a single point (n,) or per-sample start states (count, n).
    Both endpoints are driven by the same standard normals: the frozen path
    composes exact frozen substeps (so its endpoints follow one_step_law
    exactly), the flow path refreshes coefficients at each substep state.
    For state-independent models the flow is skipped and the same array is
    returned twice.

    ``normals``, when given, must have shape (substeps_eff, count, n); this
    is the common-random-numbers hook used when comparing controls.
    """
    xi = np.asarray(xi, dtype=float)
    u = np.asarray(u, dtype=float)
    per_sample_start = xi.ndim == 2
    n = space.n
    msub = required_substeps(model, substeps)
    if normals is None:
        if rng is None:
            raise ValueError("either rng or normals must be provided")
        normals = rng.standard_normal((msub, count, n))
    if normals.shape != (msub, count, n):
        raise ValueError(f"normals must have shape ({msub}, {count}, {n})")

    if not model.state_dependent:
        law_mean, L = _frozen_terms(space, model, xi, u, h, per_sample_start)
        if per_sample_start:
            zeta = law_mean + np.einsum("bij,bj->bi", L, normals[0])
        else:
            zeta = law_mean + normals[0] @ L.T
        return zeta, zeta

    tau = h / msub
    exp_tau = np.exp(space.mu * tau)
    phi_tau = tau * expm1_over(space.mu * tau)
    weights = covariance_weights(space, tau)

    start = xi if per_sample_start else np.broadcast_to(xi, (count, n)).copy()
    f0 = eval_drift(model, start if per_sample_start else xi, u)
    g0 = eval_noise(model, start if per_sample_start else xi, u)
    frozen = start.copy()
    flow = start.copy()
    if per_sample_start:
        A0 = _batch_cov_roots(g0, weights)
        frozen_drift = phi_tau * f0
    else:
        cov0 = (g0 @ g0.T) * weights
        A0 = sqrt_psd_batch((0.5 * (cov0 + cov0.T))[None])[0]
        frozen_drift = phi_tau * f0

    for j in range(msub):
        z = normals[j]
        if per_sample_start:
            frozen = exp_tau * frozen + frozen_drift \
                + np.einsum("bij,bj->bi", A0, z)
        else:
            frozen = exp_tau * frozen + frozen_drift + z @ A0.T
        fj = eval_drift(model, flow, u)
        gj = eval_noise(model, flow, u)
        Aj = _batch_cov_roots(gj, weights)
        flow = exp_tau * flow + phi_tau * fj + np.einsum("bij,bj->bi", Aj, z)
    return frozen, flow


def _frozen_terms(space, model, xi, u, h, per_sample_start):
    if per_sample_start:
        f = eval_drift(model, xi, u)
        g = eval_noise(model, xi, u)
        mean = (np.exp(space.mu * h) * xi
                + h * expm1_over(space.mu * h) * f)
        L = _batch_cov_factors(g, covariance_weights(space, h))
        return mean, L
    law = one_step_law(space, model, xi, u, h)
    return law.mean, sampling_factor(law.covariance)


def constant_strategy(u):
    """Strategy applying a fixed control at every step."""
    u = np.asarray(u, dtype=float)

    def strategy(t, states):
        return u

    return strategy


def integrate_mild(space: SpectralSpace, model: CoefficientModel, xi,
                   strategy, T: float, dt: float, stream, paths: int = 1,
                   t0: float = 0.0, stream_label: str = "mild",
                   blowup_threshold: float = BLOWUP_THRESHOLD) -> Trajectory:
    """Exponential-Euler ensemble integration of the controlled dynamics.

    Per step: X_{k+1} = S(dt) X_k + Phi(dt) f(X_k, u_k) + N_k with N_k the
    exact frozen-noise Gaussian at X_k. Noise increments come from the
    substream (stream, stream_label, k), drawn as one (paths, n) block per
    step; path order is fixed by the array layout, so results do not
    depend on scheduling or worker count.
    """
    if dt <= 0:
        raise ConfigError(f"dt must be > 0, got {dt}")
    span = T - t0
    steps = int(round(span / dt))
    if steps < 1 or abs(steps * dt - span) > 1e-12 * max(1.0, abs(span)):
        raise ConfigError(f"dt={dt} does not divide the horizon {span}")
    xi = np.asarray(xi, dtype=float)
    n = space.n
    X = np.broadcast_to(xi, (paths, n)).astype(float).copy()
    states = np.empty((paths, steps + 1, n))
    states[:, 0, :] = X
    times = t0 + dt * np.arange(steps + 1)
    exp_dt = np.exp(space.mu * dt)
    phi_dt = dt * expm1_over(space.mu * dt)
    weights = covariance_weights(space, dt)
    controls = None
    per_path_controls = False
    for k in range(steps):
        u = np.asarray(strategy(times[k], X), dtype=float)
        if controls is None:
            per_path_controls = u.ndim == 2
            shape = (paths, steps, model.d) if per_path_controls \
                else (steps, model.d)
            controls = np.zeros(shape)
        if per_path_controls:
            controls[:, k, :] = u
        else:
            controls[k, :] = u
        F = eval_drift(model, X, u)
        G = eval_noise(model, X, u)
        z = substream(stream, stream_label, k).standard_normal((paths, n))
        if model.noise_state_dependent:
            L = _batch_cov_factors(G, weights)
            noise = np.einsum("bij,bj->bi", L, z)
        else:
            cov = (G[0] @ G[0].T) * weights
            L = sampling_factor(0.5 * (cov + cov.T))
            noise = z @ L.T
        X = exp_dt * X + phi_dt * F + noise
        worst = float(np.max(np.abs(X)))
        if not np.isfinite(worst) or worst > blowup_threshold:
            raise BlowUpError(step=k + 1, norm=worst)
        states[:, k + 1, :] = X
    return Trajectory(times=times, states=states, controls=controls,
                      seed=int(stream), stream_label=stream_label)


def trajectory_rows(traj: Trajectory):
    """Yield CSV rows (path_id, step, time, x_1.., u_1..); controls repeat
    the step's control (last row carries the final control again)."""
    paths, nodes, n = traj.states.shape
    per_path = traj.controls.ndim == 3
    steps = nodes - 1
    for p in range(paths):
        for k in range(nodes):
            ku = min(k, steps - 1)
            u = traj.controls[p, ku] if per_path else traj.controls[ku]
            yield (p, k, traj.times[k], *traj.states[p, k], *u)


def write_trajectory_csv(traj: Trajectory, path):
    """Export the ensemble as (path_id, step, time, x_1.., u_1..) rows."""
    from .artifacts import write_csv

    n = traj.states.shape[2]
    d = traj.controls.shape[-1]
    header = ["path_id", "step", "time"]
    header += [f"x_{i+1}" for i in range(n)]
    header += [f"u_{i+1}" for i in range(d)]
    return write_csv(path, header, trajectory_rows(traj))
