"""Experiment orchestration: run a parsed config, emit artifacts, replay.

Artifacts per run: <kind>_<seed>.csv, <kind>_<seed>.json and the embedded
canonical config <kind>_<seed>.config.ini. Replay re-executes the embedded
config and demands byte-identical CSVs.
"""

import shutil
import tempfile
from pathlib import Path

import numpy as np

from . import artifacts
from .approx_builder import (audit_definition3, build_approx_solution,
                             theta_nonexpansive_check)
from .config import ExperimentConfig, load_config
from .errors import ConfigError
from .nagumo_checker import certify_boundary, galerkin_ladder
from .quasi_tangency import VERDICT_TANGENT, tangency_profile
from .viability_mc import closed_loop_viability, linear_equivalence_experiment

EXIT_PASS = 0
EXIT_FAIL = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_REPLAY_MISMATCH = 4


def _exp_int(cfg, key, default):
    return int(cfg.experiment.get(key, default))


def _exp_float(cfg, key, default=None):
    v = cfg.experiment.get(key, default)
    if v is None:
        raise ConfigError(f"experiment.{key} is required for kind "
                          f"'{cfg.kind}'")
    return float(v)


def _exp_vector(cfg, key):
    v = cfg.experiment.get(key)
    if v is None:
        raise ConfigError(f"experiment.{key} is required for kind "
                          f"'{cfg.kind}'")
    return np.atleast_1d(np.asarray(v, dtype=float))


def run_experiment(cfg: ExperimentConfig, out_dir) -> tuple[int, dict]:
    """Execute one experiment; returns (exit code, summary dict)."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    runner = _RUNNERS[cfg.kind]
    code, summary = runner(cfg, out_dir)
    stem = f"{cfg.kind}_{cfg.seed}"
    (out_dir / f"{stem}.config.ini").write_text(cfg.canonical_text())
    artifacts.write_json(out_dir / f"{stem}.json", summary)
    return code, summary


def _run_tangency(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    control_set = cfg.build_control_set(space)
    xi = cfg.xi(space)
    ladder = _exp_vector(cfg, "h_ladder")
    count = _exp_int(cfg, "count", 20000)
    substeps = _exp_int(cfg, "substeps", 8)
    refine = bool(cfg.control.get("refine", False))
    lambdas = [0.0]
    if model.gamma > 0.0:
        lambdas.append(model.gamma)
    profiles = {}
    rows = []
    for lam in lambdas:
        prof = tangency_profile(space, model, K, xi, ladder, lam,
                                control_set, count, cfg.seed,
                                substeps=substeps, refine=refine)
        profiles[lam] = prof
        for res in prof.residuals:
            rows.append((res.h, res.lam, res.term_gap, res.term_cond,
                         res.total, res.std_err, *res.control))
    header = ["h", "lambda", "term_gap", "term_cond", "total", "std_err"]
    header += [f"u_{i+1}" for i in range(space.d)]
    artifacts.write_csv(out_dir / f"tangency_{cfg.seed}.csv", header, rows)
    summary = {
        "kind": "tangency",
        "seed": cfg.seed,
        "profiles": {
            repr(lam): {
                "verdict": prof.verdict,
                "loglog_slope": prof.loglog_slope,
                "tol_abs": prof.tol_abs,
                "combined_std_err": prof.combined_std_err,
                "totals": [r.total for r in prof.residuals],
                "eta_modes": [r.eta_mode for r in prof.residuals],
            } for lam, prof in profiles.items()
        },
        "verdict": profiles[0.0].verdict,
    }
    code = EXIT_PASS if profiles[0.0].verdict == VERDICT_TANGENT else EXIT_FAIL
    return code, summary


def _run_nagumo(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    samples = _exp_int(cfg, "boundary_samples", 256)
    cert = certify_boundary(space, model, K, samples, cfg.seed)
    header = [f"x_{i+1}" for i in range(space.n)]
    header += ["lhs_dn1", "dn2_norm", "pass_dn1", "pass_dn2"]
    rows = [(*r.point, r.lhs_dn1, r.dn2_norm, r.pass_dn1, r.pass_dn2)
            for r in cert.reports]
    artifacts.write_csv(out_dir / f"nagumo_{cfg.seed}.csv", header, rows)
    summary = {
        "kind": "nagumo",
        "seed": cfg.seed,
        "passed": cert.passed,
        "worst_dn1_margin": cert.worst_dn1_margin,
        "worst_dn2_norm": cert.worst_dn2_norm,
        "samples": cert.samples,
        "tolerances": {"dn1": cert.tol_dn1, "dn2": cert.tol_dn2},
        # the trace sum is truncated at the retained noise directions; in
        # the truncation the discarded tail is identically zero
        "hs_tail": 0.0,
    }
    return (EXIT_PASS if cert.passed else EXIT_FAIL), summary


def _run_approx(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    control_set = cfg.build_control_set(space)
    xi = cfg.xi(space)
    epsilon = _exp_float(cfg, "epsilon")
    T = _exp_float(cfg, "T")
    paths = _exp_int(cfg, "paths", 256)
    substeps = _exp_int(cfg, "substeps", 8)
    control_count = _exp_int(cfg, "count", 512)
    outcome = build_approx_solution(space, model, K, xi, epsilon, T,
                                    control_set, paths, cfg.seed,
                                    control_count=control_count,
                                    substeps=substeps)
    header = ["step", "time", "delta"]
    header += [f"u_{i+1}" for i in range(space.d)]
    header += ["phi_norm_sq", "psi_energy", "mean_corr_sq"]
    rows = []
    if outcome.solution is not None:
        sol = outcome.solution
        for k in range(len(sol.deltas)):
            phi_sq = float(np.sum(sol.phi_record[k] ** 2))
            rows.append((k, sol.times[k], sol.deltas[k], *sol.controls[k],
                         phi_sq, sol.psi_energy[k], sol.mean_corr_sq[k]))
    artifacts.write_csv(out_dir / f"approx_{cfg.seed}.csv", header, rows)
    if not outcome.ok:
        f = outcome.failure
        summary = {
            "kind": "approx", "seed": cfg.seed, "built": False,
            "failure": {"node": f.node, "time": f.time, "delta": f.delta,
                        "residual": f.residual, "budget": f.budget,
                        "message": f.message},
        }
        return EXIT_FAIL, summary
    sol = outcome.solution
    audit = audit_definition3(sol)
    summary = {
        "kind": "approx", "seed": cfg.seed, "built": True,
        "steps": len(sol.deltas),
        "audit": {
            "passed": audit.passed,
            "clauses": [{"name": c.name, "value": c.value, "bound": c.bound,
                         "margin": c.margin, "passed": c.passed}
                        for c in audit.clauses],
        },
        "theta_nonexpansive": theta_nonexpansive_check(sol),
    }
    return (EXIT_PASS if audit.passed else EXIT_FAIL), summary


def _run_viability(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    control_set = cfg.build_control_set(space)
    xi = cfg.xi(space)
    T = _exp_float(cfg, "T")
    dt = _exp_float(cfg, "dt")
    paths = _exp_int(cfg, "paths", 1000)
    control_count = _exp_int(cfg, "count", 1024)
    per_path = bool(cfg.experiment.get("per_path_control", False))
    report = closed_loop_viability(space, model, K, xi, T, dt, control_set,
                                   paths, cfg.seed,
                                   control_count=control_count,
                                   per_path_control=per_path)
    rows = list(zip(report.times, report.mean_sq_distance, report.std_err))
    artifacts.write_csv(out_dir / f"viability_{cfg.seed}.csv",
                        ["time", "mean_sq_dist", "std_err"], rows)
    threshold = cfg.experiment.get("pass_threshold")
    passed = True if threshold is None \
        else report.sup_value <= float(threshold)
    summary = {
        "kind": "viability", "seed": cfg.seed,
        "sup_value": report.sup_value, "strategy": report.strategy,
        "paths": report.paths, "passed": passed,
    }
    return (EXIT_PASS if passed else EXIT_FAIL), summary


def _run_galerkin(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    control_set = cfg.build_control_set(space)
    xi = cfg.xi(space)
    h = _exp_float(cfg, "h")
    count = _exp_int(cfg, "count", 20000)
    l_values = [int(v) for v in _exp_vector(cfg, "l_values")]
    m_values = [int(v) for v in _exp_vector(cfg, "m_values")]
    cells = galerkin_ladder(space, model, K, l_values, m_values, xi, h,
                            count, cfg.seed,
                            control_set=control_set,
                            substeps=_exp_int(cfg, "substeps", 8))
    rows = [(c.l, c.m, c.total, c.std_err) for c in cells]
    artifacts.write_csv(out_dir / f"galerkin_{cfg.seed}.csv",
                        ["l", "m", "total", "std_err"], rows)
    full = next(c for c in cells
                if c.l == max(l_values) and c.m == max(m_values))
    passed = all(
        c.total <= full.total
        + 3.0 * float(np.sqrt(c.std_err ** 2 + full.std_err ** 2))
        for c in cells)
    summary = {
        "kind": "galerkin", "seed": cfg.seed, "passed": passed,
        "full_total": full.total, "full_std_err": full.std_err,
        "cells": [{"l": c.l, "m": c.m, "total": c.total,
                   "std_err": c.std_err} for c in cells],
    }
    return (EXIT_PASS if passed else EXIT_FAIL), summary


def _run_linear_equiv(cfg: ExperimentConfig, out_dir: Path):
    space = cfg.build_space()
    model = cfg.build_model(space)
    K = cfg.build_constraint(space)
    control_set = cfg.build_control_set(space)
    xi = cfg.xi(space)
    T = _exp_float(cfg, "T")
    dt_ladder = _exp_vector(cfg, "dt_ladder")
    paths = _exp_int(cfg, "paths", 1000)
    count = _exp_int(cfg, "count", 1024)
    report, _ = linear_equivalence_experiment(space, model, K, xi, T,
                                              dt_ladder, paths, cfg.seed,
                                              control_set,
                                              control_count=count)
    rows = list(zip(report.dt_ladder, report.sup_values, report.std_errs))
    artifacts.write_csv(out_dir / f"linear-equiv_{cfg.seed}.csv",
                        ["dt", "sup_mean_sq_dist", "std_err"], rows)
    summary = {
        "kind": "linear-equiv", "seed": cfg.seed, "passed": report.passed,
        "sup_values": list(report.sup_values),
        "std_errs": list(report.std_errs),
    }
    return (EXIT_PASS if report.passed else EXIT_FAIL), summary


_RUNNERS = {
    "tangency": _run_tangency,
    "nagumo": _run_nagumo,
    "approx": _run_approx,
    "viability": _run_viability,
    "galerkin": _run_galerkin,
    "linear-equiv": _run_linear_equiv,
}


def replay(artifact_dir) -> tuple[int, str]:
    """Re-run the embedded config and compare artifacts byte for byte."""
    artifact_dir = Path(artifact_dir)
    if not artifact_dir.is_dir():
        return EXIT_CONFIG, f"artifact directory not found: {artifact_dir}"
    configs = sorted(artifact_dir.glob("*.config.ini"))
    if not configs:
        return EXIT_CONFIG, f"no embedded config in {artifact_dir}"
    messages = []
    for config_path in configs:
        cfg = load_config(config_path)
        stem = f"{cfg.kind}_{cfg.seed}"
        stored_csv = artifact_dir / f"{stem}.csv"
        if not stored_csv.exists():
            return EXIT_CONFIG, f"missing stored artifact {stored_csv}"
        tmp = Path(tempfile.mkdtemp(prefix="viabqt-replay-"))
        try:
            run_experiment(cfg, tmp)
            fresh_csv = tmp / f"{stem}.csv"
            diff = artifacts.first_csv_difference(stored_csv, fresh_csv)
            if diff is not None:
                row, col, a, b = diff
                return EXIT_REPLAY_MISMATCH, (
                    f"{stored_csv.name}: first differing cell at row {row}, "
                    f"column {col}: stored={a!r} fresh={b!r}")
            messages.append(f"{stem}: byte-identical")
        finally:
            shutil.rmtree(tmp, ignore_errors=True)
    return EXIT_PASS, "; ".join(messages)
