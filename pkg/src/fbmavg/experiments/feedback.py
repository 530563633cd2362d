"""Averaging with feedback: the fast diffusion sees the slow state.

The pair

    dx = f(x, y) dB + g(x, y) dt,
    dy = eps^-1 V0(x, y) dt + eps^-1/2 V(x, y) o dW

is co-simulated with the slow state frozen over each slow step while the
fast state takes ``ceil(h / (eps / substep_ratio))`` Heun substeps.  Every
eps uses the same fBm paths and fresh fast noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np

from .. import fast as _fast
from .. import rng as _rng
from ..fbm import sample_conditional_future, sample_fbm
from ..gridpath import GridPath, TimeGrid, holder_seminorms
from ..sde import BLOWUP, BlowUpError, euler
from ..sewing import DefectNorms, conditional_defect_norms
from ..stats import bootstrap_slope, loglog_fit, lp_norm_band
from . import registry
from .config import ConfigError, from_mapping
from .report import ConvergenceReport, PointCache, build_report, digest, gather_points, manifest


@dataclass(frozen=True)
class FeedbackConfig:
    f: object = "cos_y_a"
    g: object = "zero"
    fast: object = "von_mises"
    eps_grid: tuple = (0.2, 0.1, 0.05, 0.025)
    H: float = 0.75
    T: float = 1.0
    n_steps: int = 1024
    substep_ratio: float = 20.0
    beta: float | None = None          # defaults to 0.8 H
    x0: float = 0.0
    n_mc: int = 256
    p: float = 2.0
    seed: int = 0
    chunk: int = 32

    def __post_init__(self):
        eps = np.asarray(self.eps_grid, dtype=float)
        if eps.size == 0 or np.any(eps <= 0) or np.any(np.diff(eps) >= 0):
            raise ConfigError("eps_grid must be positive and strictly decreasing")
        if self.substep_ratio < 10:
            raise ConfigError("substep_ratio below 10 does not resolve the fast scale")
        if not 0 < self.beta_report < self.H:
            raise ConfigError("need 0 < beta < H")
        if self.n_mc < 2 or self.chunk < 1:
            raise ConfigError("need n_mc >= 2 and chunk >= 1")

    @property
    def beta_report(self) -> float:
        return 0.8 * self.H if self.beta is None else float(self.beta)

    @classmethod
    def profile(cls, name: str) -> "FeedbackConfig":
        if name == "smoke":
            return cls(eps_grid=(0.2, 0.1), n_mc=32)
        if name == "paper":
            return cls(eps_grid=(0.2, 0.1, 0.05, 0.025, 0.0125, 0.00625), n_mc=2048, n_steps=4096)
        raise ConfigError(f"unknown profile {name!r}")

    @classmethod
    def from_dict(cls, d, base=None):
        return from_mapping(cls, d, base)


class AveragedField:
    """``x -> int f(x, y) mu^x(dy)`` evaluated on batches of slow states.

    When the invariant law does not move with ``x`` (checked on a few
    states) one density serves every call; otherwise it is recomputed per
    state.
    """

    def __init__(self, coef: registry.Coefficient, sys: _fast.FastSystem, n_y: int = 256):
        self.coef, self.sys, self.n_y = coef, sys, n_y
        self._density = None
        if not coef.y_free:
            ref = _fast.invariant_density(sys, [0.0], n_y)
            if all(ref.tv_distance(_fast.invariant_density(sys, [x], n_y)) < 1e-12 for x in (0.7, -1.9, 3.1)):
                self._density = ref

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if self.coef.y_free:
            return self.coef(x, 0.0)
        if self._density is not None:
            d = self._density
            return np.sum(self.coef(x[..., None], d.grid) * (d.density * d.dy), axis=-1)
        flat = x.reshape(-1)
        out = np.array([_fast.averaged_coefficient(lambda xx, y: self.coef(xx[..., 0], y), self.sys, [v],
                                                   n_y=self.n_y) for v in flat])
        return out.reshape(x.shape)


def substeps(h: float, eps: float, ratio: float) -> int:
    return max(1, ceil(h / (eps / ratio) - 1e-12))


def cosimulate(f: registry.Coefficient, g: registry.Coefficient, sys: _fast.FastSystem, x0: float, db: np.ndarray,
               h: float, y0: np.ndarray, rng: np.random.Generator, ratio: float = 20.0, t0: float = 0.0):
    """Slow and fast paths on the slow grid, shapes (batch, n+1).

    The slow step is the same left-point update as ``sde.euler`` (so a
    coefficient free of ``y`` reproduces the averaged solver exactly).
    """
    batch, n = db.shape
    sub = substeps(h, sys.epsilon, ratio)
    dt = h / sub
    x = np.full(batch, float(x0))
    y = np.array(y0, dtype=float)
    xs = np.empty((batch, n + 1))
    ys = np.empty((batch, n + 1))
    xs[:, 0], ys[:, 0] = x, y
    for k in range(n):
        step = np.zeros_like(x)
        step = step + f(x, y) * db[:, k]
        if not g.is_zero:
            step = step + g(x, y) * h
        xk = x[:, None]
        for _ in range(sub):
            y = _fast.step_frozen(sys, xk, y, dt, rng.standard_normal((batch, sys.m)))
        x = x + step
        if not np.all(np.abs(x) < BLOWUP):
            raise BlowUpError(t0 + (k + 1) * h)
        xs[:, k + 1], ys[:, k + 1] = x, y
    return xs, ys


def _stationary_start(sys: _fast.FastSystem, x0: float, n: int, rng: np.random.Generator) -> np.ndarray:
    return _fast.invariant_density(sys, [x0]).sample(n, rng)


def _averaged_solution(cfg, f, g, sys, db, h):
    fbar, gbar = AveragedField(f, sys), AveragedField(g, sys)
    G = None if g.is_zero else (lambda z: gbar(z[:, 0])[:, None])
    return euler([cfg.x0], h, lambda z: fbar(z[:, 0])[:, None], db[..., None], G=G)[..., 0]


def _feedback_chunk(cfg_d: dict, a: int, b: int, todo: tuple) -> dict:
    cfg = FeedbackConfig.from_dict(cfg_d)
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    B = sample_fbm(cfg.H, grid, b - a, seed=cfg.seed, path_start=a).paths[:, :, 0]
    out = {"hash": digest(B), "points": {}}
    if not todo:
        return out
    f, g = registry.coefficient(cfg.f), registry.coefficient(cfg.g)
    db = np.diff(B, axis=1)
    sys0 = registry.fast_system(cfg.fast, cfg.eps_grid[0])
    xbar = _averaged_solution(cfg, f, g, sys0, db, grid.h)
    for i in todo:
        sys = sys0.with_epsilon(cfg.eps_grid[i])
        rng = _rng.stream(cfg.seed, _rng.FAST, 10 + i, a)
        y0 = _stationary_start(sys, cfg.x0, b - a, rng)
        x, _ = cosimulate(f, g, sys, cfg.x0, db, grid.h, y0, rng, cfg.substep_ratio)
        out["points"][i] = {"errors": holder_seminorms(x - xbar, grid.h, cfg.beta_report),
                            "sup": np.max(np.abs(x - xbar), axis=1)}
    return out


def run_feedback(cfg: FeedbackConfig, jobs: int = 1, cache_dir=None) -> ConvergenceReport:
    """``E|x^eps - xbar|_beta^p`` over ``cfg.eps_grid`` with a fitted rate."""
    sys = registry.fast_system(cfg.fast, cfg.eps_grid[0])
    f = registry.coefficient(cfg.f)
    cache = PointCache(cache_dir, cfg) if cache_dir is not None else None
    points, driver, resumed = gather_points(_feedback_chunk, cfg, len(cfg.eps_grid), jobs, cache)
    errors = np.stack([points[i]["errors"] for i in range(len(cfg.eps_grid))], axis=1)
    rep = build_report("feedback", "eps", cfg.eps_grid, errors, cfg.p, decreasing_param=True, seed=cfg.seed)
    m = np.asarray(rep.mean_err)
    rep.checks = {
        "error_decreasing_in_eps": bool(np.all(np.diff(m) <= 2 * np.hypot(rep.se[1:], rep.se[:-1]))),
        "kappa_positive_95": rep.kappa_ci is not None and rep.kappa_ci[0] > 0,
    }
    # averaged drift of the Bessel example checked against its closed form
    fbar = AveragedField(f, sys)
    xs = np.linspace(-2, 2, 9)
    sup = np.stack([points[i]["sup"] for i in range(len(cfg.eps_grid))], axis=1)
    sup_rep = build_report("feedback_sup", "eps", cfg.eps_grid, sup, cfg.p, decreasing_param=True, seed=cfg.seed)
    extras = {"substeps": [substeps(cfg.T / cfg.n_steps, e, cfg.substep_ratio) for e in cfg.eps_grid],
              "beta": cfg.beta_report, "sup_norm_err": sup_rep.mean_err, "sup_norm_kappa": sup_rep.kappa,
              "sup_norm_kappa_ci": None if sup_rep.kappa_ci is None else list(sup_rep.kappa_ci)}
    if isinstance(cfg.f, str) and cfg.f == "cos_y_a" and cfg.fast == "von_mises":
        oracle = registry.bessel_ratio() * (0.5 + 0.25 * np.cos(xs))
        extras["fbar_oracle_error"] = float(np.max(np.abs(fbar(xs) - oracle)))
    rep.extras = extras
    rep.manifest = manifest(cfg, cfg.seed, driver_hash=driver, grid={"T": cfg.T, "n": cfg.n_steps})
    rep.run_info = {"resumed_points": resumed}
    return rep


# --- uniform bound -------------------------------------------------------------------------

def _uniform_chunk(cfg_d: dict, a: int, b: int, todo: tuple, h_spec, spans_idx: tuple) -> dict:
    cfg = FeedbackConfig.from_dict(cfg_d)
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    B = sample_fbm(cfg.H, grid, b - a, seed=cfg.seed, path_start=a).paths[:, :, 0]
    f, g, hc = registry.coefficient(cfg.f), registry.coefficient(cfg.g), registry.coefficient(h_spec)
    db = np.diff(B, axis=1)
    sys0 = registry.fast_system(cfg.fast, cfg.eps_grid[0])
    res = {}
    for i in todo:
        sys = sys0.with_epsilon(cfg.eps_grid[i])
        rng = _rng.stream(cfg.seed, _rng.FAST, 10 + i, a)
        y0 = _stationary_start(sys, cfg.x0, b - a, rng)
        x, y = cosimulate(f, g, sys, cfg.x0, db, grid.h, y0, rng, cfg.substep_ratio)
        integral = np.concatenate([np.zeros((b - a, 1)), np.cumsum(hc(x[:, :-1], y[:, :-1]) * db, axis=1)], axis=1)
        res[i] = np.stack([integral[:, k] for k in spans_idx], axis=1)  # s = 0
    return res


@dataclass(frozen=True)
class UniformBoundReport:
    eps: list[float]
    spans: list[float]
    norms: np.ndarray   # (len(eps), len(spans)) L^p norms
    se: np.ndarray
    eps_slope: float    # at the longest span, positive means decay as eps -> 0
    eps_slope_ci: tuple[float, float]
    time_slopes: list[float]
    checks: dict

    def to_dict(self) -> dict:
        return {"eps": self.eps, "spans": self.spans, "norms": self.norms.tolist(), "se": self.se.tolist(),
                "eps_slope": self.eps_slope, "eps_slope_ci": list(self.eps_slope_ci),
                "time_slopes": self.time_slopes, "checks": self.checks}


def uniform_bound_experiment(cfg: FeedbackConfig, h, n_spans: int = 5, jobs: int = 1,
                             centred: bool = True) -> UniformBoundReport:
    """L^p norms of ``int_0^t h(x_r, y_r) dB_r`` over eps and dyadic ``t``.

    ``h`` must be centred (``hbar = 0``) for the decay claim; pass
    ``centred=False`` to run a control whose checks expect no decay.
    """
    from .report import map_chunks, chunk_ranges
    from .config import to_mapping
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    spans_idx = tuple(grid.n // 2**j for j in range(n_spans))[::-1]
    spans = [grid.points[k] for k in spans_idx]
    tasks = [(to_mapping(cfg), a, b, tuple(range(len(cfg.eps_grid))), h, spans_idx)
             for a, b in chunk_ranges(cfg.n_mc, cfg.chunk)]
    parts = map_chunks(_uniform_chunk, tasks, jobs)
    vals = np.stack([np.concatenate([p[i] for p in parts]) for i in range(len(cfg.eps_grid))])  # (E, n_mc, S)
    norms = np.empty((len(cfg.eps_grid), len(spans)))
    se = np.empty_like(norms)
    for i in range(len(cfg.eps_grid)):
        norms[i], se[i] = lp_norm_band(vals[i], cfg.p, axis=0)
    eps = np.asarray(cfg.eps_grid, dtype=float)
    last = vals[:, :, -1].T   # (n_mc, E)
    if np.all(norms[:, -1] > 0):
        slope = loglog_fit(eps, norms[:, -1]).slope
        ci = bootstrap_slope(eps, last, cfg.p, seed=cfg.seed)
        tslopes = [loglog_fit(spans, norms[i]).slope for i in range(len(eps))]
    else:
        slope, ci, tslopes = 0.0, (0.0, 0.0), [float("nan")] * len(eps)
    if centred:
        checks = {"eps_decay_95": bool(ci[0] > 0), "time_exponent_half": bool(min(tslopes) >= 0.5 - 0.1)}
    else:
        checks = {"no_eps_decay": bool(ci[0] <= 0.05)}
    return UniformBoundReport(eps.tolist(), [float(s) for s in spans], norms, se, float(slope),
                              (float(ci[0]), float(ci[1])), [float(s) for s in tslopes], checks)


# --- sewing of the frozen-flow germ ------------------------------------------------------

def _frozen_flow_integral(h: registry.Coefficient, sys, x, y_start, db, noise, ks, ke, dt):
    """``sum_{r in [s, t)} h(x_s, Y_{s, r}) dB_r`` for all cells ``[ks_j, ke_j)`` at once.

    ``Y_{s, .}`` starts at ``y_start[:, j]`` with the slow state frozen at
    ``x[:, ks_j]`` and reuses the fast noise of the true path.
    """
    L = ke[0] - ks[0]
    xs = x[:, ks]
    y = y_start.copy()
    total = np.zeros_like(y)
    for m in range(L):
        total = total + h(xs, y) * db[:, ks + m]
        if m < L - 1:
            y = _fast.step_frozen(sys, xs[..., None], y, dt, noise[:, ks + m])
    return total


def sewing_equals_young_check(cfg: FeedbackConfig, h, eps: float, n_paths: int = 64, max_level: int | None = None,
                              x_spec: str = "fbm") -> dict:
    """Dyadic sums of the frozen-flow germ against the fine-grid Young sum.

    The slow path ``x`` is a fixed path independent of the fast noise
    (``x_spec``: ``"fbm"`` for a rescaled fBm sample, ``"const"``). The fast
    path moves with ``x``; the germ on ``[s, t]`` freezes ``x`` at ``s`` and
    restarts the fast flow from ``y_s`` with the same noise, so at the finest
    level germ and Young sum coincide.
    """
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    n = grid.n
    top = int(np.log2(n))
    if 2**top != n:
        raise ValueError("n_steps must be a power of two")
    sys = registry.fast_system(cfg.fast, eps)
    if grid.h > eps / 10:
        raise _fast.ResolutionError("slow grid does not resolve eps")
    hc = registry.coefficient(h)
    B = sample_fbm(cfg.H, grid, n_paths, seed=cfg.seed).paths[:, :, 0]
    db = np.diff(B, axis=1)
    if x_spec == "fbm":
        xp = 0.5 * sample_fbm(cfg.H, grid, 1, seed=cfg.seed + 1).paths[0, :, 0]
    elif x_spec == "const":
        xp = np.full(n + 1, cfg.x0)
    else:
        raise ConfigError(f"unknown slow path {x_spec!r}")
    x = np.broadcast_to(xp, (n_paths, n + 1))
    rng = _rng.stream(cfg.seed, _rng.FAST, 99)
    noise = rng.standard_normal((n_paths, n, sys.m))
    y = np.empty((n_paths, n + 1))
    y[:, 0] = _stationary_start(sys, xp[0], n_paths, rng)
    for k in range(n):
        y[:, k + 1] = _fast.step_frozen(sys, x[:, k:k + 1], y[:, k], grid.h, noise[:, k])
    young = np.sum(hc(x[:, :-1], y[:, :-1]) * db, axis=1)
    levels = list(range(0, (top if max_level is None else min(max_level, top)) + 1))
    sums = []
    for lev in levels:
        L = n // 2**lev
        ks = np.arange(0, n, L)
        A = _frozen_flow_integral(hc, sys, x, y[:, ks], db, noise, ks, ks + L, grid.h)
        sums.append(A.sum(axis=1))
    sums = np.array(sums)                      # (levels, n_paths)
    diff = np.sqrt(np.mean((sums - young) ** 2, axis=1))
    changes = np.sqrt(np.mean(np.diff(sums, axis=0) ** 2, axis=1))
    mesh = np.array([cfg.T / 2**lev for lev in levels])
    pos = diff > 1e-10 * diff.max()  # the finest levels agree to rounding
    fit = loglog_fit(mesh[pos], diff[pos]) if pos.sum() >= 2 else None
    ratios = changes[1:] / np.where(changes[:-1] > 0, changes[:-1], np.nan)
    return {"eps": eps, "levels": levels, "l2_difference": diff.tolist(), "level_changes": changes.tolist(),
            "contraction_factors": ratios.tolist(), "refinement_fit": None if fit is None else fit.to_dict(),
            "finest_exact": bool(diff[-1] == 0) if levels[-1] == top else None}


class AveragingGerm:
    """Frozen-flow germ ``A_st = int_s^t h(x_s, Y_{s,r}) dB_r`` with redrawable future.

    The outer draw fixes a fBm path, the fast noise and the fast start; a
    call at ``(s, ...)`` keeps everything up to ``s`` and redraws the fBm
    future given its past together with the fast noise after ``s``.
    """

    def __init__(self, cfg: FeedbackConfig, h, eps: float, rng: np.random.Generator, x_path=None):
        self.grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
        self.H = cfg.H
        self.sys = registry.fast_system(cfg.fast, eps)
        self.h = registry.coefficient(h)
        n = self.grid.n
        self.x = np.sin(2 * np.pi * self.grid.points) if x_path is None else np.asarray(x_path, dtype=float)
        self.B = sample_fbm(cfg.H, self.grid, 1, seed=int(rng.integers(2**62))).paths[0, :, 0]
        self.noise = rng.standard_normal((n, self.sys.m))
        y = np.empty(n + 1)
        y[0] = _stationary_start(self.sys, self.x[0], 1, rng)[0]
        for k in range(n):
            y[k + 1] = _fast.step_frozen(self.sys, self.x[k:k + 1], y[k:k + 1], self.grid.h, self.noise[k:k + 1])[0]
        self.y = y

    def _index(self, t: float) -> int:
        return int(round((t - self.grid.t0) / self.grid.h))

    def _future(self, ks: int, n: int, rng: np.random.Generator):
        g = self.grid
        past = GridPath(TimeGrid(g.t0, g.points[ks], ks), self.B[:ks + 1, None]) if ks > 0 else None
        if past is None:
            fut = sample_fbm(self.H, g, n, seed=int(rng.integers(2**62))).paths[:, :, 0]
        else:
            fut = sample_conditional_future(past, TimeGrid(g.points[ks], g.t1, g.n - ks), n,
                                            int(rng.integers(2**62)), self.H)[:, :, 0]
            fut = np.concatenate([np.broadcast_to(self.B[:ks], (n, ks)), self.B[ks] + fut], axis=1)
        noise = np.concatenate([np.broadcast_to(self.noise[:ks], (n,) + self.noise[:ks].shape),
                                rng.standard_normal((n, g.n - ks, self.sys.m))], axis=1)
        return np.diff(fut, axis=1), noise

    def _flow(self, ks, ke, ystart, db, noise):
        xs = np.full(ystart.shape, self.x[ks])
        y = ystart.copy()
        total = np.zeros_like(y)
        for k in range(ks, ke):
            total = total + self.h(xs, y) * db[:, k]
            y = _fast.step_frozen(self.sys, xs[:, None], y, self.grid.h, noise[:, k])
        return total, y

    def _true_y(self, ks, ke, ystart, noise):
        y = ystart.copy()
        for k in range(ks, ke):
            y = _fast.step_frozen(self.sys, np.full((len(y), 1), self.x[k]), y, self.grid.h, noise[:, k])
        return y

    def germ(self, s, t, n, rng):
        ks, kt = self._index(s), self._index(t)
        db, noise = self._future(ks, n, rng)
        return self._flow(ks, kt, np.full(n, self.y[ks]), db, noise)[0]

    def defect(self, s, u, t, n, rng):
        ks, ku, kt = self._index(s), self._index(u), self._index(t)
        db, noise = self._future(ks, n, rng)
        y_s = np.full(n, self.y[ks])
        a_st = self._flow(ks, kt, y_s, db, noise)[0]
        a_su = self._flow(ks, ku, y_s, db, noise)[0]
        y_u = self._true_y(ks, ku, y_s, noise)
        a_ut = self._flow(ku, kt, y_u, db, noise)[0]
        return a_st - a_su - a_ut


def averaging_germ_factory(cfg: FeedbackConfig, h, eps: float):
    return lambda rng: AveragingGerm(cfg, h, eps, rng)


def averaging_defect_norms(cfg: FeedbackConfig, h, eps: float, spans, s: float = 0.25, n_outer: int = 32,
                           n_inner: int = 64) -> DefectNorms:
    """Two-level Monte Carlo defect norms of the frozen-flow germ at midpoints."""
    triples = [(s, s + w / 2, s + w) for w in spans]
    return conditional_defect_norms(averaging_germ_factory(cfg, h, eps), triples, p=2, n_outer=n_outer,
                                    n_inner=n_inner, seed=cfg.seed)
