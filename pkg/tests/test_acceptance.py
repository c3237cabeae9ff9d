"""Acceptance suite: one test per criterion, each printing a PASS line
with the measured quantities after its assertions hold."""

import math
from pathlib import Path

import numpy as np
import pytest

from viab_qt import (Ball, HalfSpace, OneStepLaw, SpectralSpace,
                     audit_definition3, build_approx_solution,
                     certify_boundary, closed_loop_viability,
                     correction_variable, galerkin_ladder, make_model,
                     noise_covariance, residual_for_control, residual_terms,
                     sample_one_step, singleton_control, tangency_profile,
                     integrate_mild, constant_strategy)
from viab_qt.cli import main
from viab_qt.quasi_tangency import VERDICT_NOT_TANGENT, VERDICT_TANGENT
from viab_qt.streams import substream

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

BALL2 = Ball(radius=1.0, center=np.zeros(2))
LINE = HalfSpace(normal=np.array([1.0]), offset=0.0)


def report(criterion, detail):
    print(f"PASS criterion {criterion}: {detail}")


def space(n=2, m=1, d=1, mu=None):
    mu = np.zeros(n) if mu is None else np.asarray(mu, float)
    return SpectralSpace(n=n, mu=mu, m=m, d=d)


def test_criterion_1_halfspace_plateau():
    # half-space K = (-inf, 0], 1-D driftless diffusion sigma = 0.1:
    # term_gap at h = 0.01 equals sigma^2/2 = 0.005 within 3 MC standard
    # errors at 1e6 samples (oracle E[(Z+)^2] = 1/2); verdict not-tangent
    sigma = 0.1
    count = 1_000_000
    sp = space(n=1)
    model = make_model(sp, "constant-diagonal", sigma=sigma)
    res = residual_for_control(sp, model, LINE, np.zeros(1), np.zeros(1),
                               0.01, 0.0, count, substream(1001, "c1"))
    se = sigma ** 2 * math.sqrt(1.25) / math.sqrt(count)
    assert abs(res.term_gap - 0.005) <= 3.0 * se, (res.term_gap, se)
    prof = tangency_profile(sp, model, LINE, np.zeros(1),
                            [0.08, 0.04, 0.02, 0.01], 0.0,
                            singleton_control(1), count, seed=1001)
    assert prof.verdict == VERDICT_NOT_TANGENT
    report(1, f"term_gap={res.term_gap:.6f} (target 0.005 +- {3 * se:.1e}), "
              f"verdict={prof.verdict}")


def test_criterion_2_tangential_decay():
    # tangential-rotation ball model: log-log slope >= 0.5 and verdict
    # tangent over the ladder 2^-4 .. 2^-10 at lambda = 0
    sp = space()
    model = make_model(sp, "tangential-rotation")
    ladder = [2.0 ** -k for k in range(4, 11)]
    prof = tangency_profile(sp, model, BALL2, np.array([1.0, 0.0]), ladder,
                            0.0, singleton_control(1), 20_000, seed=1002)
    assert prof.loglog_slope >= 0.5, prof.loglog_slope
    assert prof.verdict == VERDICT_TANGENT
    report(2, f"slope={prof.loglog_slope:.3f} (>= 0.5), verdict=tangent")


def test_criterion_3_correction_identity():
    # correction criterion == residual total at lambda = gamma on shared
    # samples, 1e-12 relative, 100 randomized configurations
    rng = np.random.default_rng(1003)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        sp = SpectralSpace(n=n, mu=rng.uniform(-2, 0.5, n), m=m, d=1)
        sigma = float(rng.uniform(0.1, 2.0))
        model = make_model(sp, "constant-diagonal", sigma=sigma)
        h = float(rng.uniform(0.005, 0.5))
        gamma = float(rng.uniform(0.0, 0.499))
        law_count = int(rng.integers(100, 500))
        xi = rng.standard_normal(n) * 0.5
        u = np.zeros(1)
        from viab_qt import one_step_law
        law = one_step_law(sp, model, xi, u, h)
        zeta = sample_one_step(law, law_count, substream(int(rng.integers(1 << 30)), "c3"))
        K = Ball(radius=1.0, center=np.zeros(n))
        eta = K.project_batch(zeta)[0]
        _, crit = correction_variable(zeta, eta, h, gamma)
        _, _, total, _ = residual_terms(zeta, eta, h, gamma)
        if total > 0:
            worst = max(worst, abs(crit - total) / total)
        assert crit == pytest.approx(total, rel=1e-12)
    report(3, f"worst relative gap {worst:.2e} over 100 configs (<= 1e-12)")


def test_criterion_4_one_step_exactness():
    # empirical covariance of 1e5 one-step samples matches the closed form
    # entrywise within 4 sqrt(2/1e5) sqrt(Cjj Ckk); degenerate eigenvalue
    # sums produce exactly h (g g^T)_jk in the formula
    rng = np.random.default_rng(1004)
    count = 100_000
    tol_factor = 4.0 * math.sqrt(2.0 / count)
    worst_ratio = 0.0
    for case in range(20):
        n = int(rng.integers(1, 5))
        m = int(rng.integers(1, 4))
        mu = rng.uniform(-2.0, 1.0, n)
        if case % 5 == 0 and n >= 2:
            mu[1] = -mu[0]  # force a degenerate pair
        sp = SpectralSpace(n=n, mu=mu, m=m, d=1)
        g = rng.standard_normal((n, m))
        h = float(rng.uniform(0.05, 0.5))
        cov = noise_covariance(sp, h, g)
        if case % 5 == 0 and n >= 2:
            assert cov[0, 1] == h * (g @ g.T)[0, 1]
        law = OneStepLaw(mean=np.zeros(n), covariance=cov, h=h,
                         control=np.zeros(1))
        samples = sample_one_step(law, count, substream(1004, "c4", case))
        emp = samples.T @ samples / count
        scale = np.sqrt(np.outer(np.diag(cov), np.diag(cov)))
        err = np.abs(emp - cov)
        bound = tol_factor * scale
        ok = err <= bound + 1e-300
        assert np.all(ok), (case, err, bound)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratios = np.where(scale > 0, err / (tol_factor * scale), 0.0)
        worst_ratio = max(worst_ratio, float(np.max(ratios)))
    report(4, f"20 randomized covariances, worst error at "
              f"{worst_ratio:.2f} of the tolerance")


def test_criterion_5_builder_soundness():
    sp = space()
    model = make_model(sp, "tangential-rotation")
    xi = np.array([1.0, 0.0])
    cs = singleton_control(1)
    audits = []
    for eps in (0.1, 0.03, 0.01):
        out = build_approx_solution(sp, model, BALL2, xi, eps, 0.5, cs,
                                    paths=256, seed=1005)
        assert out.ok, (eps, out.failure)
        sol = out.solution
        audit = audit_definition3(sol)
        assert audit.passed, (eps, audit)
        audits.append((eps, audit))
        # budget identity: recorded energies recombine to the residual
        for k, q in enumerate(sol.corrections):
            delta = sol.deltas[k]
            direct = np.mean(np.sum(q * q, axis=1)) / delta \
                + np.sum(np.mean(q, axis=0) ** 2) / delta ** 2
            assert sol.node_residual_total[k] == pytest.approx(direct,
                                                               rel=1e-12)
    bad = make_model(sp, "linear", C=[np.eye(2)])
    out = build_approx_solution(sp, bad, BALL2, xi, 0.1, 0.5, cs,
                                paths=256, seed=1005)
    assert not out.ok and out.failure.node == 0
    report(5, "builds pass the audit at eps in {0.1, 0.03, 0.01}; "
              "radial noise fails at node 0 "
              f"(residual {out.failure.residual:.3f} > "
              f"{out.failure.budget:.4f})")


def test_criterion_6_closed_loop_decay():
    sp = space()
    model = make_model(sp, "tangential-rotation")
    xi = np.array([1.0, 0.0])
    sups, errs = [], []
    for i, dt in enumerate((0.02, 0.01, 0.005)):
        rep = closed_loop_viability(sp, model, BALL2, xi, 1.0, dt,
                                    singleton_control(1), 10_000,
                                    seed=1006 + i)
        k = int(np.argmax(rep.mean_sq_distance))
        sups.append(rep.sup_value)
        errs.append(rep.std_err[k])
    for i in range(2):
        slack = 3.0 * math.sqrt(errs[i] ** 2 + errs[i + 1] ** 2)
        assert sups[i + 1] <= sups[i] + slack, (sups, errs)
    report(6, "sup E[d^2] = " + " > ".join(f"{s:.2e}" for s in sups)
           + " across dt in {0.02, 0.01, 0.005}")


def test_criterion_7_nagumo_cross_validation():
    sp = space()
    ladder = [2.0 ** -k for k in range(4, 8)]
    # plateau verdicts need ~4e5 samples for the factor-100 separation in
    # the rule (total/std_err is h-independent there); the frozen endpoint
    # law is substep-exact, so 2 substeps suffice for those models
    roster = [
        ("tangential-rotation", {}, 20_000, 8),
        ("radial-restoring", {"rate": 1.0}, 20_000, 8),
        ("zero", {}, 20_000, 8),
        ("clipped-polynomial", {"amp": 1.0, "radius": 2.0}, 20_000, 8),
        ("linear", {"C": [np.eye(2)]}, 400_000, 2),
        ("constant-diagonal", {"sigma": 0.5}, 400_000, 2),
    ]
    lines = []
    for fam_index, (family, params, count, substeps) in enumerate(roster):
        model = make_model(sp, family, **params)
        cert = certify_boundary(sp, model, BALL2, 256, seed=1007)
        pts = BALL2.boundary_sample(5, substream(1007, "pts", fam_index))
        verdicts = []
        for i, x in enumerate(pts):
            prof = tangency_profile(sp, model, BALL2, x, ladder, 0.0,
                                    singleton_control(1), count,
                                    seed=1070 + i, substeps=substeps)
            verdicts.append(prof.verdict)
        if cert.passed:
            assert all(v != VERDICT_NOT_TANGENT for v in verdicts), \
                (family, verdicts)
        dn2_failed = any(not r.pass_dn2 for r in cert.reports)
        if dn2_failed:
            assert all(v == VERDICT_NOT_TANGENT for v in verdicts), \
                (family, verdicts)
        lines.append(f"{family}:{'pass' if cert.passed else 'fail'}/"
                     f"{verdicts[0]}")
    report(7, "; ".join(lines))


def test_criterion_8_galerkin_uniformity():
    sp = SpectralSpace(n=8, mu=np.zeros(8), m=4, d=1)
    model = make_model(sp, "tangential-rotation")
    xi = np.zeros(8)
    xi[0] = 1.0
    cells = galerkin_ladder(sp, model, Ball(1.0, np.zeros(8)), [2, 4, 8],
                            [1, 2, 4], xi, h=0.01, count=20_000, seed=1008)
    full = next(c for c in cells if c.l == 8 and c.m == 4)
    for c in cells:
        bound = full.total + 3.0 * math.sqrt(c.std_err ** 2
                                             + full.std_err ** 2)
        assert c.total <= bound, (c, full)
    report(8, f"9 truncation cells within full-model total "
              f"{full.total:.5f} + 3 se")


def test_criterion_9_integrator_strong_order():
    # 1-D linear-drift model with additive noise against exact transition
    # sampling on shared normals: strong-error slope 1.0 +- 0.2
    sp = SpectralSpace(n=1, mu=np.array([-0.5]), m=1, d=1)
    model = make_model(sp, "radial-restoring", rate=1.0, sigma=0.5)
    a = -1.5  # net linear rate seen by the exact transition
    sigma = 0.5
    paths = 4000
    deltas = [2.0 ** -k for k in range(4, 9)]
    errors = []
    for dt in deltas:
        traj = integrate_mild(sp, model, np.ones(1),
                              constant_strategy(np.zeros(1)), 1.0, dt,
                              stream=1009, paths=paths)
        exact = np.full(paths, 1.0)
        decay = math.exp(a * dt)
        std = sigma * math.sqrt((math.exp(2 * a * dt) - 1.0) / (2 * a))
        for k in range(traj.states.shape[1] - 1):
            z = substream(1009, "mild", k).standard_normal((paths, 1))
            exact = decay * exact + std * z[:, 0]
        errors.append(math.sqrt(np.mean(
            (traj.states[:, -1, 0] - exact) ** 2)))
    slope = float(np.polyfit(np.log(deltas), np.log(errors), 1)[0])
    assert 0.8 <= slope <= 1.2, (slope, errors)
    report(9, f"strong-error slope {slope:.3f} in [0.8, 1.2]")


def test_criterion_10_replay_determinism(tmp_path):
    configs = sorted(CONFIG_DIR.glob("*.ini"))
    assert configs, "acceptance configs missing"
    checked = 0
    for config in configs:
        out1 = tmp_path / f"{config.stem}-t1"
        out4 = tmp_path / f"{config.stem}-t4"
        kind = None
        for line in config.read_text().splitlines():
            if line.startswith("kind"):
                kind = line.split("=")[1].strip()
        code1 = main([kind, "--config", str(config), "--out", str(out1),
                      "--threads", "1"])
        code4 = main([kind, "--config", str(config), "--out", str(out4),
                      "--threads", "4"])
        assert code1 == code4
        csvs1 = sorted(out1.glob("*.csv"))
        assert csvs1
        for csv1 in csvs1:
            csv4 = out4 / csv1.name
            assert csv1.read_bytes() == csv4.read_bytes(), csv1.name
        assert main(["replay", str(out1)]) == 0
        checked += 1
    report(10, f"{checked} configs byte-identical across threads 1/4 "
               "and under replay")
