"""One-step tangency residuals, their minimization over controls, and the
decay profile across a ladder of step lengths.

The residual at scale h and exponent lam combines the mean-square
correction energy E|zeta - eta|^2 / h^(1-2 lam) with the squared-mean term
|E[zeta - eta]|^2 / h^2, where zeta is a frozen-coefficient one-step
endpoint and eta a K-valued corrected endpoint. Two eta realizations are
evaluated and the smaller residual is reported (both are sound upper
bounds):

  * projection:  eta = Pi_K(zeta), the per-sample projection;
  * flow:        eta = Pi_K of the true-dynamics endpoint driven by the
                 same noise increments.

For state-independent coefficients the two coincide by construction. The
flow realization matters for state-dependent noise: plain projection
cannot cancel the systematic one-step bulge (its mean term stalls at a
positive plateau), while the coupled flow endpoint tracks the actual
dynamics and lets the residual decay at the proper rate when the set is
viable.
"""

from dataclasses import dataclass

import numpy as np

from .one_step_sampler import coupled_step_samples, required_substeps
from .spectral_core import SpectralSpace
from .streams import substream
from .system_model import CoefficientModel, ControlSet, control_grid
from .errors import ConfigError

N_ERROR_BATCHES = 10
DEFAULT_SUBSTEPS = 8

VERDICT_TANGENT = "tangent"
VERDICT_NOT_TANGENT = "not-tangent"
VERDICT_INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class TangencyResidual:
    """One evaluation of the tangency functional at scale h."""

    h: float
    lam: float
    term_gap: float
    term_cond: float
    total: float
    control: np.ndarray
    std_err: float
    sample_count: int
    flagged: bool = False
    eta_mode: str = "projection"


@dataclass(frozen=True)
class TangencyProfile:
    """Residual decay along a decreasing ladder of step lengths."""

    ladder: np.ndarray
    residuals: list
    loglog_slope: float
    verdict: str
    tol_abs: float
    combined_std_err: float


def residual_terms(zeta: np.ndarray, eta: np.ndarray, h: float, lam: float):
    """(term_gap, term_cond, total, std_err) from endpoint/correction pairs.

    The standard error comes from 10 contiguous batch means of the total.
    """
    q = zeta - eta
    sq = np.sum(q * q, axis=1)
    gap_scale = h ** (1.0 - 2.0 * lam)
    term_gap = float(np.mean(sq) / gap_scale)
    mean_q = np.mean(q, axis=0)
    term_cond = float(np.sum(mean_q * mean_q) / (h * h))
    totals = []
    for chunk_q, chunk_sq in zip(np.array_split(q, N_ERROR_BATCHES),
                                 np.array_split(sq, N_ERROR_BATCHES)):
        if len(chunk_sq) == 0:
            continue
        mq = np.mean(chunk_q, axis=0)
        totals.append(np.mean(chunk_sq) / gap_scale
                      + np.sum(mq * mq) / (h * h))
    totals = np.asarray(totals)
    std_err = float(np.std(totals, ddof=1) / np.sqrt(len(totals))) \
        if len(totals) > 1 else 0.0
    return term_gap, term_cond, term_gap + term_cond, std_err


def _validate_residual_args(h, lam, count):
    if h <= 0:
        raise ValueError(f"step length must be > 0, got {h}")
    if not (0.0 <= lam < 0.5):
        raise ValueError(f"lambda must lie in [0, 0.5), got {lam}")
    if count < 100:
        raise ValueError("residual estimation needs at least 100 samples")


def residual_for_control(space: SpectralSpace, model: CoefficientModel, K,
                         xi, u, h: float, lam: float, count: int, rng,
                         substeps: int = DEFAULT_SUBSTEPS,
                         normals=None) -> TangencyResidual:
    """Tangency residual for a fixed control, frozen at the point xi."""
    _validate_residual_args(h, lam, count)
    u = np.asarray(u, dtype=float)
    zeta, flow = coupled_step_samples(space, model, xi, u, h, count,
                                      rng=rng, substeps=substeps,
                                      normals=normals)
    eta, _, conv, _ = K.project_batch(zeta)
    flagged = not bool(np.all(conv))
    gap, cond, total, se = residual_terms(zeta, eta, h, lam)
    mode = "projection"
    if flow is not zeta:
        eta_f, _, conv_f, _ = K.project_batch(flow)
        flagged = flagged or not bool(np.all(conv_f))
        gap_f, cond_f, total_f, se_f = residual_terms(zeta, eta_f, h, lam)
        if total_f < total:
            gap, cond, total, se = gap_f, cond_f, total_f, se_f
            mode = "flow"
    return TangencyResidual(h=float(h), lam=float(lam), term_gap=gap,
                            term_cond=cond, total=total, control=u,
                            std_err=se, sample_count=int(count),
                            flagged=flagged, eta_mode=mode)


def minimize_residual(space: SpectralSpace, model: CoefficientModel, K, xi,
                      h: float, lam: float, control_set: ControlSet,
                      count: int, rng, substeps: int = DEFAULT_SUBSTEPS,
                      refine: bool = False) -> TangencyResidual:
    """Minimize the residual over the control grid with common random
    numbers, optionally refined by coordinate descent from the best grid
    point. Shared normals make grid refinement exactly monotone."""
    _validate_residual_args(h, lam, count)
    grid = control_grid(control_set)
    msub = required_substeps(model, substeps)
    normals = rng.standard_normal((msub, count, space.n))

    def evaluate(u):
        return residual_for_control(space, model, K, xi, u, h, lam, count,
                                    rng=None, substeps=substeps,
                                    normals=normals)

    best = None
    for u in grid:
        res = evaluate(u)
        if best is None or res.total < best.total:
            best = res
    if refine and len(grid) > 1:
        best = _coordinate_descent(evaluate, best, control_set)
    return best


def _coordinate_descent(evaluate, best, control_set, iterations=20):
    d = control_set.dim
    if control_set.shape == "box":
        step = np.max(control_set.radius_or_halfwidths) / max(
            control_set.grid_resolution - 1, 1)
    else:
        step = float(control_set.radius_or_halfwidths[0]) / max(
            control_set.grid_resolution - 1, 1)
    if step <= 0:
        return best
    u = best.control.copy()
    for _ in range(iterations):
        improved = False
        for i in range(d):
            for sign in (1.0, -1.0):
                cand = u.copy()
                cand[i] += sign * step
                if not control_set.contains(cand):
                    continue
                res = evaluate(cand)
                if res.total < best.total:
                    best = res
                    u = cand
                    improved = True
        if not improved:
            step *= 0.5
    return best


def tangency_profile(space: SpectralSpace, model: CoefficientModel, K, xi,
                     ladder, lam: float, control_set: ControlSet,
                     count: int, seed: int,
                     substeps: int = DEFAULT_SUBSTEPS,
                     refine: bool = False,
                     tol_abs=None) -> TangencyProfile:
    """Estimate the residual along a decreasing step ladder and classify.

    Verdict rules: tangent when the finest total is inside the absolute
    tolerance (default 10x the combined standard error across rungs) and
    the fitted log-log slope is at least 0.5; not-tangent when the slope
    is at most 0.1 and the finest total exceeds 10x the tolerance;
    anything else, or any flagged residual, is inconclusive.
    """
    ladder = np.asarray(ladder, dtype=float)
    if ladder.size < 4:
        raise ConfigError("ladder must contain at least 4 step lengths")
    if np.any(np.diff(ladder) >= 0):
        raise ConfigError("ladder must be strictly decreasing")
    residuals = []
    for i, h in enumerate(ladder):
        rng = substream(seed, "tangency", i)
        residuals.append(minimize_residual(space, model, K, xi, float(h),
                                           lam, control_set, count, rng,
                                           substeps=substeps, refine=refine))
    totals = np.array([r.total for r in residuals])
    errs = np.array([r.std_err for r in residuals])
    combined = float(np.sqrt(np.sum(errs * errs)))
    tol = 10.0 * combined if tol_abs is None else float(tol_abs)
    slope = _loglog_slope(ladder, totals)
    if any(r.flagged for r in residuals):
        verdict = VERDICT_INCONCLUSIVE
    elif totals[-1] <= tol and slope >= 0.5:
        verdict = VERDICT_TANGENT
    elif slope <= 0.1 and totals[-1] > 10.0 * tol:
        verdict = VERDICT_NOT_TANGENT
    else:
        verdict = VERDICT_INCONCLUSIVE
    return TangencyProfile(ladder=ladder, residuals=residuals,
                           loglog_slope=slope, verdict=verdict, tol_abs=tol,
                           combined_std_err=combined)


def _loglog_slope(ladder, totals):
    mask = totals > 0.0
    if np.count_nonzero(mask) < 2:
        # residual vanishes on (almost) the whole ladder
        return float("inf")
    x = np.log(ladder[mask])
    y = np.log(totals[mask])
    slope = np.polyfit(x, y, 1)[0]
    return float(slope)


def correction_variable(zeta_samples: np.ndarray, eta_samples: np.ndarray,
                        h: float, gamma: float):
    """Normalized correction samples p = h^(gamma - 1/2) (eta - zeta) and
    the sequential criterion E|p|^2 + h^(-(1+2 gamma)) |E p|^2.

    Algebraically this equals the residual total at lam = gamma on the
    same samples; the identity holds to floating-point roundoff.
    """
    if h <= 0:
        raise ValueError(f"step length must be > 0, got {h}")
    q = np.asarray(eta_samples, float) - np.asarray(zeta_samples, float)
    p = h ** (gamma - 0.5) * q
    mean_p = np.mean(p, axis=0)
    criterion = float(np.mean(np.sum(p * p, axis=1))
                      + h ** (-(1.0 + 2.0 * gamma))
                      * np.sum(mean_p * mean_p))
    return p, criterion
