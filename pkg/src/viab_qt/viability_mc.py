"""Trajectory-level viability experiments.

``closed_loop_viability`` runs the true dynamics (coefficients evaluated at
the running state) under the greedy feedback that applies, at each step,
the residual-minimizing control frozen at the ensemble mean state. No
corrections are injected: the observable is the mean-square distance to K
along the grid, whose supremum estimates how far the controlled flow
strays from the constraint set.

``linear_equivalence_experiment`` refines the grid for a linear system on
a convex set: when the supremum decays to the Monte Carlo floor across a
dt ladder, approximate viability is indistinguishable from viability at
the chosen resolution.
"""

from dataclasses import dataclass

import numpy as np

from .constraint_sets import distance
from .errors import ConfigError
from .one_step_sampler import integrate_mild
from .quasi_tangency import DEFAULT_SUBSTEPS, minimize_residual
from .spectral_core import SpectralSpace
from .streams import substream
from .system_model import CoefficientModel, ControlSet, control_grid

STRATEGY_GREEDY = "tangency-greedy"
STRATEGY_GREEDY_PER_PATH = "tangency-greedy-per-path"


@dataclass(frozen=True)
class ViabilityReport:
    times: np.ndarray
    mean_sq_distance: np.ndarray
    std_err: np.ndarray
    sup_value: float
    strategy: str
    paths: int


@dataclass(frozen=True)
class LinearEquivalenceReport:
    dt_ladder: np.ndarray
    sup_values: np.ndarray
    std_errs: np.ndarray
    passed: bool


def closed_loop_viability(space: SpectralSpace, model: CoefficientModel, K,
                          xi, T: float, dt: float, control_set: ControlSet,
                          paths: int, seed: int, control_count: int = 1024,
                          substeps: int = DEFAULT_SUBSTEPS,
                          per_path_control: bool = False,
                          t0: float = 0.0) -> ViabilityReport:
    """Mean-square distance profile of the greedily controlled flow."""
    xi = np.asarray(xi, dtype=float)
    if distance(K, xi) > 1e-8:
        raise ConfigError("initial state must lie in K")
    if dt > 0.05 * (T - t0) + 1e-15:
        raise ConfigError("dt must not exceed 5% of the horizon")
    grid = control_grid(control_set)
    singleton = len(grid) == 1

    def strategy(t, X):
        k = int(round((t - t0) / dt))
        if singleton:
            return grid[0]
        if per_path_control:
            controls = np.zeros((X.shape[0], space.d))
            for p in range(X.shape[0]):
                rng = substream(seed, "viability-ctrl", k, p)
                controls[p] = minimize_residual(
                    space, model, K, X[p], dt, 0.0, control_set,
                    max(100, control_count // 8), rng,
                    substeps=substeps).control
            return controls
        pooled = np.mean(X, axis=0)
        rng = substream(seed, "viability-ctrl", k)
        return minimize_residual(space, model, K, pooled, dt, 0.0,
                                 control_set, control_count, rng,
                                 substeps=substeps).control

    traj = integrate_mild(space, model, xi, strategy, T, dt, seed,
                          paths=paths, t0=t0, stream_label="viability")
    nodes = traj.states.shape[1]
    mean_sq = np.zeros(nodes)
    std_err = np.zeros(nodes)
    for k in range(nodes):
        d = K.distance_batch(traj.states[:, k, :])
        dsq = d * d
        mean_sq[k] = float(np.mean(dsq))
        std_err[k] = float(np.std(dsq, ddof=1) / np.sqrt(paths)) \
            if paths > 1 else 0.0
    tag = STRATEGY_GREEDY_PER_PATH if per_path_control else STRATEGY_GREEDY
    return ViabilityReport(times=traj.times, mean_sq_distance=mean_sq,
                           std_err=std_err, sup_value=float(np.max(mean_sq)),
                           strategy=tag, paths=paths)


def linear_equivalence_experiment(space: SpectralSpace,
                                  linear_model: CoefficientModel, K, xi,
                                  T: float, dt_ladder, paths: int,
                                  seed: int, control_set: ControlSet,
                                  control_count: int = 1024,
                                  substeps: int = DEFAULT_SUBSTEPS):
    """Grid-refinement study for linear systems on convex sets.

    Passes when the sup mean-square distance is nonincreasing along the
    ladder (within 3 combined standard errors) and the finest value sits
    below 10x its standard error.
    """
    if linear_model.family != "linear":
        raise ConfigError("equivalence experiment requires the linear family")
    if not getattr(K, "convex", False):
        raise ConfigError("equivalence experiment requires a convex set")
    dt_ladder = np.asarray(dt_ladder, dtype=float)
    if np.any(np.diff(dt_ladder) >= 0):
        raise ConfigError("dt ladder must be strictly decreasing")
    sups, errs, reports = [], [], []
    for i, dt in enumerate(dt_ladder):
        rep = closed_loop_viability(space, linear_model, K, xi, T, float(dt),
                                    control_set, paths, seed + i,
                                    control_count=control_count,
                                    substeps=substeps)
        sups.append(rep.sup_value)
        k_sup = int(np.argmax(rep.mean_sq_distance))
        errs.append(rep.std_err[k_sup])
        reports.append(rep)
    sups = np.asarray(sups)
    errs = np.asarray(errs)
    nonincreasing = all(
        sups[i + 1] <= sups[i] + 3.0 * np.sqrt(errs[i] ** 2 + errs[i + 1] ** 2)
        for i in range(len(sups) - 1))
    floor_ok = sups[-1] <= 10.0 * max(errs[-1], 1e-300)
    return LinearEquivalenceReport(dt_ladder=dt_ladder, sup_values=sups,
                                   std_errs=errs,
                                   passed=bool(nonincreasing and floor_ok)), reports
