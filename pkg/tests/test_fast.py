import io

import numpy as np
import pytest
from scipy import stats
from scipy.special import i0, i1

from fbmavg import fast, fbm
from fbmavg.gridpath import GridPath, TimeGrid, circle_distance
from fbmavg.stats import loglog_fit

R2 = i1(2) / i0(2)


def bessel_ratio_series(z=2.0, terms=40):
    # I_nu(z) = sum_k (z/2)^(2k+nu) / (k! (k+nu)!)
    from math import factorial
    i0s = sum((z / 2) ** (2 * k) / factorial(k) ** 2 for k in range(terms))
    i1s = sum((z / 2) ** (2 * k + 1) / (factorial(k) * factorial(k + 1)) for k in range(terms))
    return i1s / i0s


def unwrap(d):
    return np.mod(d + np.pi, 2 * np.pi) - np.pi


def const(c):
    return lambda x, y: np.full_like(np.asarray(y, dtype=float), c)


def test_ellipticity_enforced():
    with pytest.raises(fast.EllipticityError):
        fast.FastSystem(const(0.0), (lambda x, y: np.sin(y),), 0.1, 0.1)


def test_deterministic_rotation():
    sys = fast.FastSystem(const(1.0), (const(0.0),), 0.5, 0.0)
    y = np.array([0.1, 6.2])
    out = fast.step_frozen(sys, [0.0], y, 0.05, np.zeros((2, 1)))
    assert np.allclose(out, np.mod(y + 0.05 / 0.5, 2 * np.pi), atol=1e-12, rtol=0)


def test_dt_guard():
    sys = fast.FastSystem.von_mises(0.1)
    with pytest.raises(fast.ResolutionError):
        fast.step_frozen(sys, [0.0], np.zeros(1), 0.011, np.zeros((1, 1)))
    g = TimeGrid(0, 1, 4)
    with pytest.raises(fast.ResolutionError):
        fast.step_feedback(sys, GridPath(g, np.zeros(5)), 0.0, np.zeros(1), 0.02, np.zeros((1, 1)))


def test_brownian_motion_on_circle():
    eps, t, dt = 1.0, 0.5, 0.05
    sys = fast.FastSystem(const(0.0), (const(1.0),), eps, 1.0)
    y = fast.simulate_frozen(sys, [0.0], np.full(10_000, 1.0), t, dt, np.random.default_rng(0))
    z = unwrap(y - 1.0) / np.sqrt(t / eps)
    assert stats.kstest(z, "norm").pvalue > 0.01


def test_heun_is_stratonovich():
    eps, dt, N, y0 = 1.0, 0.01, 1_000_000, 0.3
    V = lambda x, y: 1 + 0.5 * np.sin(y)
    sys = fast.FastSystem(const(0.0), (V,), eps, 0.25)
    rng = np.random.default_rng(1)
    inc = unwrap(fast.step_frozen(sys, [0.0], np.full(N, y0), dt, rng.standard_normal((N, 1))) - y0)
    ito_drift = 0.5 * V(0, y0) * 0.5 * np.cos(y0) / eps
    se = inc.std(ddof=1) / np.sqrt(N) / dt
    assert abs(inc.mean() / dt - ito_drift) <= 3 * se
    # the Itô-converted Euler step agrees in law with Heun
    e = unwrap(fast.step_ito_euler(sys, [0.0], np.full(N, y0), dt, rng.standard_normal((N, 1))) - y0)
    assert abs(e.mean() / dt - ito_drift) <= 3 * se


def test_feedback_with_constant_path_matches_frozen():
    sys = fast.FastSystem.von_mises(0.1, coupled=True)
    g = TimeGrid(0, 1, 16)
    xp = GridPath(g, np.full(17, 0.7))
    y = np.linspace(0, 6, 50)
    z = np.random.default_rng(2).standard_normal((50, 1))
    a = fast.step_feedback(sys, xp, 0.33, y, 0.005, z)
    b = fast.step_frozen(sys, [0.7], y, 0.005, z)
    assert np.array_equal(a, b)


def test_feedback_tracks_moving_well():
    eps, dt = 0.01, 0.0005
    sys = fast.FastSystem.von_mises(eps, coupled=True)
    g = TimeGrid(0, 1, 64)
    xp = GridPath(g, np.pi / 2 * g.points)
    rng = np.random.default_rng(3)
    y = fast.invariant_density(sys, [0.0]).sample(4000, rng)
    for k in range(int(round(1 / dt))):
        y = fast.step_feedback(sys, xp, k * dt, y, dt, rng.standard_normal((len(y), 1)))
    end = fast.invariant_density(sys, [np.pi / 2])
    assert fast.averaged_coefficient(lambda x, yy: np.cos(yy - np.pi / 2), sys, [np.pi / 2]) == pytest.approx(R2)
    counts = np.bincount((y / (2 * np.pi) * 64).astype(int) % 64, minlength=64)
    hist = counts / counts.sum() / (2 * np.pi / 64)
    ref = np.interp((np.arange(64) + 0.5) * 2 * np.pi / 64, np.append(end.grid, 2 * np.pi),
                    np.append(end.density, end.density[0]))
    assert 0.5 * np.sum(np.abs(hist - ref)) * 2 * np.pi / 64 <= 0.08


# --- invariant density ------------------------------------------------------------

def test_uniform_density():
    d = fast.invariant_density(fast.FastSystem(const(0.0), (const(1.0),), 0.1, 1.0), [0.0])
    assert np.max(np.abs(d.density - 1 / (2 * np.pi))) <= 1e-10


def test_von_mises_density_and_normalisation():
    d = fast.invariant_density(fast.FastSystem.von_mises(0.1), [0.0])
    vm = np.exp(2 * np.cos(d.grid)) / (2 * np.pi * i0(2))
    assert np.max(np.abs(d.density - vm)) <= 1e-10
    assert abs(np.sum(d.density) * d.dy - 1) <= 1e-10
    assert np.all(d.density >= 0)


@pytest.mark.parametrize("which", ["von_mises", "drifting", "two_fields"])
def test_density_matches_occupation(which):
    if which == "von_mises":
        sys = fast.FastSystem.von_mises(0.05)
    elif which == "drifting":
        sys = fast.FastSystem(lambda x, y: 1 + 0.5 * np.sin(y), (lambda x, y: 1 + 0.5 * np.cos(y),), 0.05, 0.2)
    else:
        sys = fast.FastSystem(lambda x, y: -np.sin(y), (lambda x, y: np.cos(y), lambda x, y: 0.5 + np.sin(y)),
                              0.05, 0.05)
    d = fast.invariant_density(sys, [0.0])
    occ = fast.occupation_density(sys, [0.0], 10**6, n_bins=64, seed=4)
    ref = np.interp(occ.grid, np.append(d.grid, 2 * np.pi), np.append(d.density, d.density[0]))
    assert occ.tv_distance(ref) <= 0.02


def test_density_independent_of_eps():
    a = fast.invariant_density(fast.FastSystem.von_mises(0.1), [0.0])
    b = fast.invariant_density(fast.FastSystem.von_mises(0.01), [0.0])
    assert a.tv_distance(b) <= 1e-8


def test_density_csv():
    d = fast.invariant_density(fast.FastSystem.von_mises(0.1), [0.0], n_y=8)
    buf = io.StringIO()
    d.to_csv(buf)
    rows = buf.getvalue().strip().splitlines()
    assert rows[0] == "y,density" and len(rows) == 9


def test_averaged_coefficients():
    uni = fast.FastSystem(const(0.0), (const(1.0),), 0.1, 1.0)
    assert abs(fast.averaged_coefficient(lambda x, y: np.sin(y), uni, [0.0])) <= 1e-10
    vm = fast.FastSystem.von_mises(0.1)
    assert fast.averaged_coefficient(lambda x, y: np.cos(y), vm, [0.0]) == pytest.approx(bessel_ratio_series(),
                                                                                        rel=1e-6)
    assert fast.averaged_coefficient(lambda x, y: np.full_like(y, 2.5), vm, [1.0]) == pytest.approx(2.5, abs=1e-14)
    f1 = lambda x, y: np.cos(y)
    f2 = lambda x, y: np.sin(2 * y) + y * 0 + 1
    lin = fast.averaged_coefficient(lambda x, y: 2 * f1(x, y) - 3 * f2(x, y), vm, [0.0])
    assert lin == pytest.approx(2 * fast.averaged_coefficient(f1, vm, [0.0])
                                - 3 * fast.averaged_coefficient(f2, vm, [0.0]), abs=1e-14)


# --- semigroup -----------------------------------------------------------------

def test_semigroup_trivial_cases():
    sys = fast.FastSystem.von_mises(0.1)
    one = fast.semigroup_apply(sys, [0.0], lambda y: np.ones_like(y), [0.0, 0.05], n_mc=50, n_y=8)
    assert np.all(one.values == 1)
    at0 = fast.semigroup_apply(sys, [0.0], np.cos, 0.0, n_mc=50, n_y=8)
    assert np.allclose(at0.values[0], np.cos(at0.grid))


def test_semigroup_long_time_and_spectral_reference():
    sys = fast.FastSystem.von_mises(0.05)
    est = fast.semigroup_apply(sys, [0.0], np.cos, [0.05, 0.5], n_mc=4000, n_y=16, seed=1)
    ref = fast.semigroup_spectral(sys, [0.0], np.cos, 0.05, n_y=16)
    assert np.all(np.abs(est.values[0] - ref) <= 4 * est.mc_bands[0] + 5e-3)
    assert np.all(np.abs(est.values[1] - R2) <= 4 * est.mc_bands[1])
    # sup-norm contraction and positivity
    assert np.max(np.abs(est.values)) <= 1 + 3 * est.mc_bands.max()
    pos = fast.semigroup_apply(sys, [0.0], lambda y: 1 + np.cos(y), 0.1, n_mc=500, n_y=8)
    assert np.all(pos.values >= 0)


def test_ergodicity_decay_scales_with_eps():
    sys = fast.FastSystem.von_mises(0.05)
    out = {}
    for i, eps in enumerate((0.05, 0.025)):
        s = sys.with_epsilon(eps)
        out[eps] = fast.ergodicity_diagnostics(s, [0.0], np.cos, eps * np.arange(0, 8.01, 0.5), seed=10 + i)
        assert out[eps]["slope"] < 0
    assert out[0.025]["c"] == pytest.approx(out[0.05]["c"], rel=0.2)
    assert out[0.025]["slope"] / out[0.05]["slope"] == pytest.approx(2.0, rel=0.2)
    gap = fast.spectral_gap(sys, [0.0])
    assert out[0.05]["c"] == pytest.approx(gap * 0.05, rel=0.25)


def test_ergodicity_rejects_constant():
    with pytest.raises(ValueError):
        fast.ergodicity_diagnostics(fast.FastSystem.von_mises(0.1), [0.0], lambda y: np.ones_like(y), [0, 0.1])


def _h_centred(x, y):
    return np.cos(y - np.asarray(x)[..., 0]) - R2


def test_x_continuity_and_decay_envelope():
    sys = fast.FastSystem.von_mises(0.05, coupled=True)
    tg = 0.05 * np.arange(0, 8.01, 1.0)
    same = fast.x_continuity_check(sys, [0.3], [0.3], _h_centred, tg, n_mc=200)
    assert np.all(same["lhs"] == 0)
    c = fast.ergodicity_diagnostics(sys, [0.0], np.cos, 0.05 * np.arange(0, 8.01, 0.5))["c"]
    kappa = 0.5

    def run(dxs, seed):
        return [fast.x_continuity_check(sys, [0.0], [dx], _h_centred, tg, n_mc=2000, seed=seed) for dx in dxs]

    calib = run([0.05, 0.2, 0.8], seed=1)
    C_lin = max(np.max(r["lhs"] / (r["dist"] * r["lip"])) for r in calib)
    env = lambda r: r["sup"] ** kappa * r["lip"] ** (1 - kappa) * r["dist"] ** (1 - kappa) * np.exp(-kappa * c * tg / 0.05)
    C_env = max(np.max(r["lhs"] / env(r)) for r in calib)
    valid = run([0.1, 0.4], seed=2)
    for r in valid:
        # no growth in t: one constant for all times
        assert np.all(r["lhs"] <= C_lin * r["dist"] * r["lip"] + 3 * r["band"])
        assert np.all(r["lhs"] <= C_env * env(r) + 3 * r["band"])
    early = run([0.025, 0.05, 0.1, 0.2], seed=3)
    fit = loglog_fit([r["dist"] for r in early], [r["lhs"][1] for r in early])
    assert abs(fit.slope - 1.0) <= 0.15


def test_ergodic_average_scaling():
    sys = fast.FastSystem.von_mises(0.02)
    rep = fast.ergodic_average_check(sys, [0.0], np.cos, [0.25, 0.5, 1.0], [0.01, 0.02, 0.04], p=2, n_mc=1000)
    assert abs(rep["eps_slope"] - 0.5) <= 0.15
    assert abs(rep["t_slope"] - 0.5) <= 0.15
    flat = fast.ergodic_average_check(sys, [0.0], lambda y: np.ones_like(y), [0.25, 0.5], [0.02, 0.04], n_mc=10)
    assert flat["degenerate"] and max(flat["norms"]) == 0


def test_flow_deviation():
    eps = 0.1
    sys = fast.FastSystem.von_mises(eps, coupled=True)
    g = TimeGrid(0, 1, 2**10)
    spans = [eps / 4 / 2**k for k in range(5)]
    const_x = GridPath(g, np.full(len(g), 0.3))
    zero = fast.flow_deviation_check(sys, const_x, 0.5, spans[:2], n_mc=100)
    assert zero["norms"] == [0.0, 0.0]
    x = fbm.sample_fbm(0.75, g, seed=1).path(0)
    alpha = 0.7
    rep = fast.flow_deviation_check(sys, x, 0.5, spans, n_mc=500, dt=eps / 800)
    assert rep["fit"]["slope"] >= 0.5 + alpha - 0.15
    r1 = fast.flow_deviation_check(sys, GridPath(g, g.points), 0.5, spans[:1], n_mc=500, dt=eps / 800, seed=7)
    r2 = fast.flow_deviation_check(sys, GridPath(g, 2 * g.points), 0.5, spans[:1], n_mc=500, dt=eps / 800, seed=7)
    assert r2["norms"][0] >= 1.7 * r1["norms"][0]
    d = fast.coupled_deviation(sys, x, 0.5, 0.55, eps / 100, 50)
    assert np.all(d <= np.pi)


def test_circle_wrap_consistent():
    y = fast.simulate_frozen(fast.FastSystem.von_mises(0.1), [0.0], np.zeros(1000), 0.5, 0.01,
                             np.random.default_rng(0))
    assert np.all((y >= 0) & (y < 2 * np.pi))
    assert np.all(circle_distance(y, 0.0) <= np.pi)
