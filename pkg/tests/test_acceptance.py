"""Acceptance criteria at their stated scales and tolerances.

Each test records a single PASS/FAIL line through the ``verdict`` fixture.
"""
import json
import time

import numpy as np
import pytest

from fbmavg import fast, fbm, sde, sewing
from fbmavg.cli import KernelConfig, UniformRunConfig, _uniform_report, kernel_checks, main
from fbmavg.experiments import FeedbackConfig, NoFeedbackConfig, run_feedback, run_nofeedback
from fbmavg.gridpath import GridPath, TimeGrid
from fbmavg.stats import loglog_fit

from test_sde import ALPHA, BETA, G9, mixed_a_priori_ratios, mixed_self_convergence, stability_family

H_SWEEP = (0.6, 0.75, 0.9)


@pytest.fixture(scope="module")
def kernels():
    return {H: kernel_checks(H, KernelConfig()) for H in H_SWEEP}


def test_criterion_01_kernel_finite_difference(verdict):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    e = 1e-3
    R = fbm.covariance_R
    worst = 0.0
    for H in H_SWEEP:
        done = 0
        while done < 50:
            r, s = rng.uniform(0.2, 2.0, 2)
            if abs(r - s) < 0.1:
                continue
            fd = (R(r + e, s + e, H) - R(r + e, s - e, H) - R(r - e, s + e, H) + R(r - e, s - e, H)) / (4 * e * e)
            worst = max(worst, abs(fbm.d2R_closed(r, s, H) - fd) / abs(fd))
            done += 1
    wall = time.perf_counter() - t0
    verdict(1, "kernel finite difference", worst <= 1e-3 and wall < 30,
            f"max rel err {worst:.2e} (tol 1e-3), {wall:.1f}s (limit 30s)")


def test_criterion_02_G_asymptotics(verdict, kernels):
    dev = {H: (kernels[H]["slope_small"] - (2 * H - 2), kernels[H]["slope_large"] - (H - 1.5)) for H in H_SWEEP}
    worst = max(abs(d) for pair in dev.values() for d in pair)
    verdict(2, "G asymptotic slopes", worst <= 0.05,
            "; ".join(f"H={H}: {a:+.4f}/{b:+.4f}" for H, (a, b) in dev.items()) + f" (tol 0.05)")


def test_criterion_03_rkhs_bound(verdict, kernels):
    viol = {H: kernels[H]["rkhs_violations"] for H in H_SWEEP}
    verdict(3, "RKHS bound", all(v == 0 for v in viol.values()),
            ", ".join(f"H={H}: C={kernels[H]['rkhs_C']:.3f}, {viol[H]} violations" for H in H_SWEEP) + " (k<=64)")


def test_criterion_04_fbm_sampler(verdict):
    t0 = time.perf_counter()
    H, N, n = 0.75, 10_000, 2**12
    g = TimeGrid(0, 1, n)
    paths = fbm.sample_fbm(H, g, n_paths=N, seed=4).paths[..., 0]
    worst_var = 0.0
    s = n // 4
    for k in (1, 16, 256, 2048):
        d = paths[:, s + k] - paths[:, s]
        sq = d * d
        z = abs(sq.mean() - (k * g.h) ** (2 * H)) / (sq.std(ddof=1) / np.sqrt(N))
        worst_var = max(worst_var, z)
    inc = np.diff(paths, axis=1) / g.h**H
    del paths
    worst_corr = 0.0
    for k in (1, 2, 4, 8, 32):
        prod = (inc[:, k:] * inc[:, :-k]).mean(axis=1)
        z = abs(prod.mean() - fbm.fgn_autocovariance(k, H)) / (prod.std(ddof=1) / np.sqrt(N))
        worst_corr = max(worst_corr, z)
    wall = time.perf_counter() - t0
    verdict(4, "fBm sampler", worst_var <= 3 and worst_corr <= 3 and wall < 60,
            f"variance {worst_var:.2f} SE, lag correlations {worst_corr:.2f} SE (tol 3), {wall:.1f}s (limit 60s)")


def test_criterion_05_conditioning(verdict):
    e = fbm.sample_fbm(0.5, TimeGrid(0, 1, 128), n_paths=50, seed=1)
    bm_mean = float(np.max(np.abs(fbm.split_arrays(e.paths, e.grid, 0.5, 0.5)[0])))
    e = fbm.sample_fbm(0.75, TimeGrid(0, 1, 256), n_paths=500, seed=11)
    recon = 0.0
    for u in (0.25, 0.5, 0.875):
        bar, tilde = fbm.split_arrays(e.paths, e.grid, u, 0.75)
        k = e.grid.index(u)
        recon = max(recon, float(np.max(np.abs(bar + tilde - (e.paths[:, k:] - e.paths[:, k : k + 1])))))
    H, N = 0.75, 10_000
    g = TimeGrid(0, 1, 16)
    past = fbm.sample_fbm(H, g.sub(0, 8), seed=2).path(0)
    draws = fbm.sample_conditional_future(past, g.sub(8, 16), N, seed=4, H=H)[:, 1:, 0]
    cond = fbm.FbmConditioner(H, past.times[1:], g.sub(8, 16).points[1:])
    S = cond.schur
    se_cov = np.sqrt((np.outer(np.diag(S), np.diag(S)) + S**2) / N)
    schur = float(np.max(np.abs(np.cov(draws.T) - S) / se_cov))
    mean = cond.mean(past.values[1:, 0]) - past.values[-1, 0]
    mean_z = float(np.max(np.abs(draws.mean(axis=0) - mean) / (draws.std(axis=0, ddof=1) / np.sqrt(N))))
    verdict(5, "conditioning", bm_mean <= 1e-8 and recon <= 1e-10 and schur <= 5 and mean_z <= 5,
            f"H=0.5 mean {bm_mean:.1e}, reconstruction {recon:.1e}, covariance {schur:.2f} SE, "
            f"mean {mean_z:.2f} SE")


def test_criterion_06_sewing_young(verdict):
    H = 0.75
    g = TimeGrid(0, 1, 2**14)
    e = fbm.sample_fbm(H, g, n_paths=100, seed=6)
    errs, profiles = [], []
    for i in range(100):
        b = e.path(i)
        res = sewing.sew(sewing.young_germ(b, b), g)
        errs.append(abs(res.integral.values[-1, 0] - 0.5 * b.values[-1, 0] ** 2))
        profiles.append(res.defect_profile[:, 1])
    factors = (np.mean(profiles, axis=0)[1:] / np.mean(profiles, axis=0)[:-1])[3:]
    declared = 2 ** (1 - 2 * H)
    dev = float(np.max(np.abs(factors / declared - 1)))
    verdict(6, "sewing and Young integral", max(errs) <= 0.01 and dev <= 0.2,
            f"max |int B dB - B1^2/2| = {max(errs):.2e} (tol 0.01), per-level factors within "
            f"{100 * dev:.1f}% of {declared:.3f} (tol 20%)")


def test_criterion_07_mixed_solver(verdict):
    C = mixed_a_priori_ratios([0.0, 0.25, 1.0, 4.0, 16.0], seed=1).max()
    valid = mixed_a_priori_ratios([0.1, 0.5, 2.0, 8.0], seed=2)
    order = mixed_self_convergence().slope
    verdict(7, "mixed SDE solver", bool(np.all(valid <= C)) and order >= 0.5,
            f"fitted C={C:.3f}, validation max ratio {valid.max():.3f} over 256 paths, "
            f"self-convergence order {order:.3f} (need >= 0.5)")


def test_criterion_08_residual_stability(verdict):
    cal = [sde.stability_terms(np.cos, *m, ALPHA, BETA) for m in stability_family(1, [0, 1, 3], [0, 1, 2], [1e-3, 0.5])]
    C = sde.fit_stability_constant(cal)
    ratios = [sde.residual_stability_check(np.cos, b, Z, Zb, ALPHA, BETA, C)[2]
              for b, Z, Zb in stability_family(2, [0.5, 2], [0.5, 1.5], [1e-2, 0.1])]
    b, Z, _ = stability_family(5, [1], [1], [0])[0]
    terms = [sde.stability_terms(np.cos, b, Z, GridPath(G9, Z.values + d * np.sin(3 * G9.points)[:, None]),
                                 ALPHA, BETA) for d in (1e-4, 1e-3, 1e-2, 1e-1)]
    slope = loglog_fit([t.diff for t in terms], [t.lhs for t in terms]).slope
    verdict(8, "residual stability", max(ratios) <= 1 and abs(slope - 1) <= 0.1,
            f"validation max lhs/rhs {max(ratios):.3f} (C={C:.3f} from a disjoint family), slope {slope:.3f}")


def test_criterion_09_ergodicity(verdict):
    sys = fast.FastSystem.von_mises(0.05)
    out = {eps: fast.ergodicity_diagnostics(sys.with_epsilon(eps), [0.0], np.cos, eps * np.arange(0, 8.01, 0.5),
                                            seed=10 + i)
           for i, eps in enumerate((0.05, 0.025))}
    ratio = out[0.025]["slope"] / out[0.05]["slope"]
    avg = fast.ergodic_average_check(fast.FastSystem.von_mises(0.02), [0.0], np.cos, [0.25, 0.5, 1.0],
                                     [0.01, 0.02, 0.04], p=2, n_mc=1000)
    ok = abs(ratio / 2 - 1) <= 0.2 and abs(avg["eps_slope"] - 0.5) <= 0.15 and abs(avg["t_slope"] - 0.5) <= 0.15
    verdict(9, "ergodicity", ok,
            f"decay slope ratio {ratio:.3f} (expect 2 within 20%), eps-slope {avg['eps_slope']:.3f}, "
            f"t-slope {avg['t_slope']:.3f} (expect 0.5 +- 0.15)")


def test_criterion_10_flow_deviation(verdict):
    eps, alpha = 0.1, 0.7
    sys = fast.FastSystem.von_mises(eps, coupled=True)
    g = TimeGrid(0, 1, 2**10)
    spans = [eps / 4 / 2**k for k in range(5)]
    zero = fast.flow_deviation_check(sys, GridPath(g, np.full(len(g), 0.3)), 0.5, spans, n_mc=100)
    x = fbm.sample_fbm(0.75, g, seed=1).path(0)
    slope = fast.flow_deviation_check(sys, x, 0.5, spans, n_mc=500, dt=eps / 800)["fit"]["slope"]
    verdict(10, "flow deviation", slope >= 0.5 + alpha - 0.15 and max(zero["norms"]) == 0.0,
            f"|t-s| slope {slope:.3f} (need >= {0.5 + alpha - 0.15:.2f}), constant x max deviation "
            f"{max(zero['norms'])}")


def test_criterion_11_nofeedback_averaging(verdict):
    cfg = NoFeedbackConfig()
    assert cfg.n_grid == (4, 16, 64, 256) and cfg.n_mc == 256 and cfg.fast_kind == "chain"
    t0 = time.perf_counter()
    rep = run_nofeedback(cfg, jobs=4)
    wall = time.perf_counter() - t0
    verdict(11, "no-feedback averaging", rep.checks["error_monotone_in_n"] and rep.passed and wall < 600,
            "errors " + ", ".join(f"{m:.3f}" for m in rep.mean_err) + f", kappa {rep.kappa:.3f}, {wall:.0f}s")


def test_criterion_12_feedback_averaging(verdict):
    cfg = FeedbackConfig()
    assert cfg.eps_grid == (0.2, 0.1, 0.05, 0.025) and cfg.f == "cos_y_a" and cfg.fast == "von_mises"
    t0 = time.perf_counter()
    rep = run_feedback(cfg, jobs=4)
    wall = time.perf_counter() - t0
    ci = rep.kappa_ci
    ok = rep.checks["error_decreasing_in_eps"] and rep.kappa > 0 and ci[0] > 0 and wall < 1800
    verdict(12, "feedback averaging", ok,
            f"beta={rep.extras['beta']:.2f} errors " + ", ".join(f"{m:.3f}" for m in rep.mean_err)
            + f", kappa {rep.kappa:.3f} CI [{ci[0]:.3f}, {ci[1]:.3f}], {wall:.0f}s; "
            f"oracle error {rep.extras['fbar_oracle_error']:.1e}")


def test_criterion_13_uniform_bound(verdict):
    rep = _uniform_report(UniformRunConfig(), jobs=4)
    ctrl = rep.extras["control"]
    verdict(13, "uniform bound", rep.passed,
            f"centred eps-slope {rep.kappa:.3f} CI [{rep.kappa_ci[0]:.3f}, {rep.kappa_ci[1]:.3f}]; control slope "
            f"{ctrl['eps_slope']:.3f} CI [{ctrl['eps_slope_ci'][0]:.3f}, {ctrl['eps_slope_ci'][1]:.3f}]")


REPRO_CONFIGS = {
    "nofeedback": {"n_mc": 16, "n_steps": 256, "n_grid": [4, 16], "chunk": 4},
    "periodic": {"n_mc": 8, "n_steps": 256, "n_grid": [1, 4], "chunk": 2},
    "feedback": {"n_mc": 16, "n_steps": 256, "eps_grid": [0.2, 0.1], "chunk": 4},
    "uniform-bound": {"n_mc": 16, "n_steps": 256, "eps_grid": [0.2, 0.1], "chunk": 4, "n_spans": 3},
    "sewing-equiv": {"n_paths": 8, "n_steps": 256},
}


def test_criterion_14_reproducibility(verdict, tmp_path, capsys):
    differing = []
    for kind, data in REPRO_CONFIGS.items():
        cfg = tmp_path / f"{kind}.json"
        cfg.write_text(json.dumps(data))
        outs = []
        for jobs in (1, 4, 1):
            out = tmp_path / f"{kind}-{jobs}-{len(outs)}"
            main(["run", kind, "--config", str(cfg), "--seed", "7", "--jobs", str(jobs), "--out", str(out)])
            outs.append({name: (out / name).read_bytes() for name in ("report.json", "report.csv", "report.dat")})
        if not outs[0] == outs[1] == outs[2]:
            differing.append(kind)
    verdict(14, "reproducibility", not differing,
            f"{len(REPRO_CONFIGS)} experiments run at jobs 1, 4, 1; differing: {differing or 'none'}")
