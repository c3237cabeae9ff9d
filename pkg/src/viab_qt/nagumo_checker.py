"""Deterministic boundary conditions for viability of smooth sets.

At a boundary point x of K = {phi <= 0} the checks are

  drift condition:  <Dphi, Ax> + <Dphi, F(x)>
                    + 1/2 sum_j <D^2phi G(x)e_j, G(x)e_j>  <=  0
  noise condition:  G*(x) Dphi(x) = 0  (noise tangential to the boundary)

evaluated exactly in the truncation (the trace sum runs over the m
retained noise directions; the discarded tail is identically zero here).
For the unit sphere the same conditions reduce to
<x, Ax> + <x, F(x)> + 1/2 |G(x)|_HS^2 <= 0 and G*(x) x = 0.

The Galerkin ladder re-evaluates the tangency residual for the family of
subsystems obtained by zeroing state modes above l and truncating the
noise to its first m' directions, probing whether residual magnitudes are
uniform across truncation levels.
"""

from dataclasses import dataclass, field

import numpy as np

from .constraint_sets import boundary_sample
from .errors import ConfigError
from .quasi_tangency import DEFAULT_SUBSTEPS, minimize_residual
from .spectral_core import SpectralSpace
from .streams import substream
from .system_model import (CoefficientModel, eval_drift, eval_noise,
                           singleton_control)

BOUNDARY_TOL = 1e-8
DN1_TOL = 1e-8
DN2_TOL = 1e-8


@dataclass(frozen=True)
class NagumoReport:
    point: np.ndarray
    lhs_dn1: float
    dn2_norm: float
    pass_dn1: bool
    pass_dn2: bool
    tol_dn1: float
    tol_dn2: float

    @property
    def passed(self) -> bool:
        return self.pass_dn1 and self.pass_dn2


@dataclass(frozen=True)
class BoundaryCertificate:
    passed: bool
    worst_dn1_margin: float
    worst_dn2_norm: float
    samples: int
    tol_dn1: float
    tol_dn2: float
    reports: list = field(repr=False)


@dataclass(frozen=True)
class GalerkinCell:
    l: int
    m: int
    total: float
    std_err: float


def _evaluate_point(space, model, x, grad, hess_diag_or_mat):
    Ax = space.mu * x
    F = eval_drift(model, x)
    G = eval_noise(model, x)
    trace_term = 0.0
    for j in range(G.shape[1]):
        col = G[:, j]
        trace_term += float(col @ hess_diag_or_mat @ col)
    lhs = float(grad @ Ax + grad @ F + 0.5 * trace_term)
    dn2_vec = G.T @ grad
    dn2_norm = float(np.linalg.norm(dn2_vec))
    gnorm = float(np.linalg.norm(grad))
    g_hs = float(np.sqrt(np.sum(G * G)))
    tol_dn2 = DN2_TOL * max(1.0, gnorm * g_hs)
    return NagumoReport(point=np.asarray(x, float), lhs_dn1=lhs,
                        dn2_norm=dn2_norm,
                        pass_dn1=lhs <= DN1_TOL,
                        pass_dn2=dn2_norm <= tol_dn2,
                        tol_dn1=DN1_TOL, tol_dn2=tol_dn2)


def check_smooth_point(space: SpectralSpace, model: CoefficientModel, K,
                       x) -> NagumoReport:
    """Evaluate both boundary conditions at a point with phi(x) = 0."""
    x = np.asarray(x, dtype=float)
    phi = K.phi(x)
    if abs(phi) > BOUNDARY_TOL:
        raise ValueError(f"point is off the boundary: |phi(x)| = {abs(phi):.2e}")
    return _evaluate_point(space, model, x, K.phi_grad(x), K.phi_hess(x))


def check_unit_ball_point(space: SpectralSpace, model: CoefficientModel,
                          x) -> NagumoReport:
    """Unit-sphere specialization: the trace term is half the squared
    Hilbert-Schmidt norm of the noise coefficient."""
    x = np.asarray(x, dtype=float)
    r = float(np.linalg.norm(x))
    if abs(r - 1.0) > 1e-10:
        raise ValueError(f"point is off the unit sphere: | |x|-1 | = {abs(r-1.0):.2e}")
    Ax = space.mu * x
    F = eval_drift(model, x)
    G = eval_noise(model, x)
    lhs = float(x @ Ax + x @ F + 0.5 * np.sum(G * G))
    dn2_norm = float(np.linalg.norm(G.T @ x))
    g_hs = float(np.sqrt(np.sum(G * G)))
    tol_dn2 = DN2_TOL * max(1.0, g_hs)
    return NagumoReport(point=x, lhs_dn1=lhs, dn2_norm=dn2_norm,
                        pass_dn1=lhs <= DN1_TOL,
                        pass_dn2=dn2_norm <= tol_dn2,
                        tol_dn1=DN1_TOL, tol_dn2=tol_dn2)


def certify_boundary(space: SpectralSpace, model: CoefficientModel, K,
                     sample_count: int, seed: int) -> BoundaryCertificate:
    """Sampled certificate: every boundary point must pass both checks.

    The universally quantified condition is undecidable as stated;
    sampling with reported worst margins is the surrogate (symmetric
    families collapse the boundary to a single orbit anyway).
    """
    if sample_count < 16:
        raise ConfigError("certificate needs at least 16 boundary samples")
    pts = boundary_sample(K, sample_count, seed)
    reports = [check_smooth_point(space, model, K, p) for p in pts]
    worst_dn1 = max(r.lhs_dn1 for r in reports)
    worst_dn2 = max(r.dn2_norm for r in reports)
    return BoundaryCertificate(passed=all(r.passed for r in reports),
                               worst_dn1_margin=worst_dn1,
                               worst_dn2_norm=worst_dn2,
                               samples=sample_count,
                               tol_dn1=DN1_TOL,
                               tol_dn2=max(r.tol_dn2 for r in reports),
                               reports=reports)


def galerkin_project_model(model: CoefficientModel, space: SpectralSpace,
                           l: int, m_prime: int):
    """Subsystem with state modes above l zeroed and noise truncated to the
    first m' directions. Returns (projected model, projected space)."""
    mask = np.zeros(space.n)
    mask[:l] = 1.0
    base_drift = model.drift_fn
    base_noise = model.noise_fn

    def drift(x, u):
        return mask * base_drift(x * mask, u)

    def noise(x, u):
        g = base_noise(x * mask, u)
        return mask[None, :, None] * g[:, :, :m_prime]

    sub_space = SpectralSpace(n=space.n, mu=space.mu, m=m_prime, d=space.d)
    sub_model = CoefficientModel(
        family=model.family, params=model.params, c=model.c,
        gamma=model.gamma, n=space.n, m=m_prime, d=model.d,
        drift_fn=drift, noise_fn=noise,
        drift_state_dependent=model.drift_state_dependent,
        noise_state_dependent=model.noise_state_dependent)
    return sub_model, sub_space


def galerkin_ladder(space: SpectralSpace, model: CoefficientModel, K,
                    l_values, m_values, xi, h: float, count: int,
                    seed: int, lam: float = 0.0, control_set=None,
                    substeps: int = DEFAULT_SUBSTEPS):
    """Tangency residual across truncation levels (l state modes, m' noise
    directions), each evaluated from the projected initial point."""
    l_values = [int(l) for l in l_values]
    m_values = [int(m) for m in m_values]
    if any(l < 1 or l > space.n for l in l_values):
        raise ConfigError(f"l values must lie in 1..{space.n}")
    if any(m < 1 or m > space.m for m in m_values):
        raise ConfigError(f"m values must lie in 1..{space.m}")
    if control_set is None:
        control_set = singleton_control(space.d)
    xi = np.asarray(xi, dtype=float)
    cells = []
    for li, l in enumerate(l_values):
        for mi, m_prime in enumerate(m_values):
            sub_model, sub_space = galerkin_project_model(model, space, l,
                                                          m_prime)
            mask = np.zeros(space.n)
            mask[:l] = 1.0
            rng = substream(seed, "galerkin", li, mi)
            res = minimize_residual(sub_space, sub_model, K, xi * mask, h,
                                    lam, control_set, count, rng,
                                    substeps=substeps)
            cells.append(GalerkinCell(l=l, m=m_prime, total=res.total,
                                      std_err=res.std_err))
    return cells
