"""Averaging without feedback: the fast process ignores the slow state.

The slow equation ``dx = f(x, Y_nt) dB + g(x, Y_nt) dt`` is solved with the
left-point Young scheme for several speed factors ``n`` on shared fBm paths
and compared with the averaged equation, whose coefficients integrate ``f``
and ``g`` against the stationary law of ``Y``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from math import ceil

import numpy as np

from .. import fast as _fast
from .. import rng as _rng
from ..fbm import sample_fbm
from ..gridpath import TimeGrid, holder_seminorms, neg_holder_norms, neg_holder_xdep_norm
from ..sde import euler
from ..stats import loglog_fit
from . import registry
from .config import ConfigError, from_mapping
from .report import (ConvergenceReport, PointCache, build_report, digest, gather_points, manifest,
                     monotone_within_bands)


class NonStationaryLaunchError(ValueError):
    """The fast process was not started from its invariant law."""


# --- finite-state fast processes ------------------------------------------------------

@dataclass(frozen=True)
class TwoStateChain:
    """Symmetric chain on {0, 1} flipping at the jump times of a Poisson process."""

    rate: float = 1.0

    @property
    def stationary(self) -> np.ndarray:
        return np.array([0.5, 0.5])

    def transition(self, t: float) -> np.ndarray:
        q = 0.5 * (1 - np.exp(-2 * self.rate * t))
        return np.array([[1 - q, q], [q, 1 - q]])

    def spectral_gap(self) -> float:
        return 2 * self.rate

    def sample(self, n_paths: int, n_steps: int, dt: float, rng: np.random.Generator,
               initial=None) -> np.ndarray:
        """Exact values on the grid ``k dt``: the state flips with the parity of Poisson counts."""
        law = self.stationary if initial is None else np.asarray(initial, dtype=float)
        y0 = (rng.uniform(size=n_paths) < law[1]).astype(int)
        flips = rng.poisson(self.rate * dt, size=(n_paths, n_steps))
        parity = np.concatenate([np.zeros((n_paths, 1), int), np.cumsum(flips, axis=1) % 2], axis=1)
        return ((y0[:, None] + parity) % 2).astype(float)


@dataclass(frozen=True)
class ResampledChain:
    """The state is redrawn independently from ``probs`` every ``refresh`` time units."""

    probs: tuple[float, ...] = (0.5, 0.5)
    refresh: float = 1.0

    @property
    def stationary(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def transition(self, t: float) -> np.ndarray:
        k = len(self.probs)
        if t < self.refresh:
            return np.eye(k)
        return np.tile(self.stationary, (k, 1))


def strong_mixing(joint: np.ndarray) -> float:
    """``sup |P(A x B) - P(A) P(B)|`` over all events of a finite joint law."""
    joint = np.asarray(joint, dtype=float)
    pa, pb = joint.sum(axis=1), joint.sum(axis=0)
    best = 0.0
    ra, rb = range(joint.shape[0]), range(joint.shape[1])
    for ka in range(1, len(ra) + 1):
        for A in itertools.combinations(ra, ka):
            for kb in range(1, len(rb) + 1):
                for B in itertools.combinations(rb, kb):
                    v = joint[np.ix_(A, B)].sum() - pa[list(A)].sum() * pb[list(B)].sum()
                    best = max(best, abs(float(v)))
    return best


def mixing_certificate(chain, t_grid, delta: float = 1.0) -> dict:
    """Exact mixing coefficients of ``(y_0, y_t)`` for a stationary finite chain.

    The envelope ``alpha(t) <= C t^-delta`` is fitted on the positive times;
    the certificate holds when ``alpha(t) t^delta`` is non-increasing over
    the second half of the grid, so the fitted envelope extends beyond it.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    pi = chain.stationary
    alphas = np.array([strong_mixing(pi[:, None] * chain.transition(t)) for t in t_grid])
    pos = t_grid > 0
    weighted = alphas[pos] * t_grid[pos] ** delta
    C = float(weighted.max()) if weighted.size else 0.0
    tail = weighted[len(weighted) // 2:]
    ok = bool(np.all(np.diff(tail) <= 1e-15)) if tail.size > 1 else True
    return {"times": t_grid.tolist(), "alpha": alphas.tolist(), "delta": float(delta), "envelope_C": C,
            "pass": ok}


# --- configurations -------------------------------------------------------------------

@dataclass(frozen=True)
class NoFeedbackConfig:
    f: object = "chain_sigma"
    g: object = "zero"
    fast_kind: str = "chain"            # "chain" or "circle"
    switch_rate: float = 1.0             # chain flip rate
    circle_strength: float = 1.0         # von Mises drift strength for the circle process
    initial_law: object = None           # None means stationary
    mixing_delta: float = 1.0
    n_grid: tuple = (4, 16, 64, 256)
    H: float = 0.75
    T: float = 1.0
    n_steps: int = 4096
    alpha: float = 0.5
    stride: int = 4
    kappa_neg: float = 0.3
    x0: float = 0.5
    n_mc: int = 256
    p: float = 2.0
    seed: int = 0
    chunk: int = 32

    def __post_init__(self):
        if self.fast_kind not in ("chain", "circle"):
            raise ConfigError("fast_kind must be 'chain' or 'circle'")
        if not 0 < self.alpha < self.H:
            raise ConfigError("need 0 < alpha < H")
        if self.n_mc < 2 or self.chunk < 1:
            raise ConfigError("need n_mc >= 2 and chunk >= 1")

    @classmethod
    def profile(cls, name: str) -> "NoFeedbackConfig":
        if name == "smoke":
            return cls(n_grid=(4, 16, 64), n_mc=64, n_steps=2048)
        if name == "paper":
            return cls(n_grid=(4, 16, 64, 256, 1024), n_mc=1024, n_steps=2**14, stride=16)
        raise ConfigError(f"unknown profile {name!r}")

    @classmethod
    def from_dict(cls, d, base=None):
        return from_mapping(cls, d, base)


def _chain(cfg: NoFeedbackConfig) -> TwoStateChain:
    return TwoStateChain(cfg.switch_rate)


def _check_launch(cfg: NoFeedbackConfig) -> None:
    if cfg.initial_law is None or cfg.initial_law == "stationary":
        return
    if cfg.fast_kind == "chain":
        law = np.asarray(cfg.initial_law, dtype=float)
        if law.shape == (2,) and np.allclose(law, _chain(cfg).stationary, atol=1e-12, rtol=0):
            return
    raise NonStationaryLaunchError(f"fast process launched from {cfg.initial_law!r}, not its invariant law")


def _circle_system(cfg: NoFeedbackConfig) -> _fast.FastSystem:
    return _fast.FastSystem.von_mises(1.0, strength=cfg.circle_strength)


def _fast_values(cfg: NoFeedbackConfig, n_index: int, n: float, grid: TimeGrid, a: int, b: int) -> np.ndarray:
    """``Y_{n t}`` on the grid for replicas ``a..b`` (stationary start)."""
    g = _rng.stream(cfg.seed, _rng.CHAIN, n_index, a)
    if cfg.fast_kind == "chain":
        return _chain(cfg).sample(b - a, grid.n, n * grid.h, g)
    sys = _circle_system(cfg)
    y = _fast.invariant_density(sys, [0.0]).sample(b - a, g)
    sub = max(1, ceil(n * grid.h / (sys.epsilon / 20)))
    dt = n * grid.h / sub
    out = np.empty((b - a, grid.n + 1))
    out[:, 0] = y
    for k in range(grid.n):
        for _ in range(sub):
            y = _fast.step_frozen(sys, [0.0], y, dt, g.standard_normal((b - a, 1)))
        out[:, k + 1] = y
    return out


def _fast_law(cfg: NoFeedbackConfig):
    """Support points and weights of the stationary law of the fast process."""
    if cfg.fast_kind == "chain":
        return np.array([0.0, 1.0]), _chain(cfg).stationary
    d = _fast.invariant_density(_circle_system(cfg), [0.0])
    return d.grid, d.density * d.dy


def averaged(coef: registry.Coefficient, support: np.ndarray, weights: np.ndarray):
    """``x -> sum_j w_j coef(x, y_j)``; coefficients free of ``y`` are returned unchanged."""
    if coef.y_free:
        return lambda x: coef(x, 0.0)
    return lambda x: np.sum(coef(x[..., None], support) * weights, axis=-1)


def _column(fn):
    return lambda z: fn(z[:, 0])[:, None]


def _nofeedback_chunk(cfg_d: dict, a: int, b: int, todo: tuple) -> dict:
    cfg = NoFeedbackConfig.from_dict(cfg_d)
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    B = sample_fbm(cfg.H, grid, b - a, seed=cfg.seed, path_start=a).paths[:, :, 0]
    out = {"hash": digest(B), "points": {}}
    if not todo:
        return out
    f, g = registry.coefficient(cfg.f), registry.coefficient(cfg.g)
    support, weights = _fast_law(cfg)
    fbar, gbar = averaged(f, support, weights), averaged(g, support, weights)
    db = np.diff(B, axis=1)
    xbar = euler([cfg.x0], grid.h, _column(fbar), db[..., None], G=_column(gbar))[..., 0]
    for i in todo:
        n = cfg.n_grid[i]
        Y = _fast_values(cfg, i, n, grid, a, b)

        def F(z, k, Y=Y):
            return f(z[:, 0], Y[:, k])[:, None]

        def G(z, k, Y=Y):
            return g(z[:, 0], Y[:, k])[:, None]

        x = euler([cfg.x0], grid.h, F, db[..., None], G=G, indexed=True)[..., 0]
        err = holder_seminorms(x - xbar, grid.h, cfg.alpha, cfg.stride)
        # |f_n - fbar|_{-kappa} along the averaged path, the oscillation that drives the error
        osc = f(xbar, Y) - fbar(xbar)
        neg = neg_holder_norms(osc, grid.h, cfg.kappa_neg, cfg.stride)
        out["points"][i] = {"errors": err, "neg_holder": neg, "sup": np.max(np.abs(x - xbar), axis=1)}
    return out


def run_nofeedback(cfg: NoFeedbackConfig, jobs: int = 1, cache_dir=None) -> ConvergenceReport:
    """Errors ``|x^n - xbar|_alpha`` in L^p over the speed factors ``cfg.n_grid``."""
    _check_launch(cfg)
    if cfg.fast_kind == "chain":
        h = cfg.T / cfg.n_steps
        cert = mixing_certificate(_chain(cfg), np.array([0.0] + [k * h * min(cfg.n_grid) for k in (1, 4, 16, 64)]
                                                        + [1.0, 2.0, 4.0, 8.0]), cfg.mixing_delta)
    else:
        gap = _fast.spectral_gap(_circle_system(cfg), [0.0])
        cert = {"spectral_gap": gap, "pass": bool(gap > 0)}
    if not cert["pass"]:
        raise RuntimeError("fast process failed its mixing certificate")
    cache = PointCache(cache_dir, cfg) if cache_dir is not None else None
    points, driver, resumed = gather_points(_nofeedback_chunk, cfg, len(cfg.n_grid), jobs, cache)
    errors = np.stack([points[i]["errors"] for i in range(len(cfg.n_grid))], axis=1)
    rep = build_report("nofeedback", "n", cfg.n_grid, errors, cfg.p, decreasing_param=False, seed=cfg.seed)
    neg = np.array([float(np.mean(points[i]["neg_holder"] ** cfg.p) ** (1 / cfg.p)) for i in range(len(cfg.n_grid))])
    neg_fit = loglog_fit(cfg.n_grid, neg) if len(neg) > 1 and np.all(neg > 0) else None
    rep.checks = {
        "mixing_certificate": bool(cert["pass"]),
        "error_monotone_in_n": monotone_within_bands(rep.mean_err, rep.se),
    }
    sup = np.stack([points[i]["sup"] for i in range(len(cfg.n_grid))], axis=1)
    rep.extras = {"mixing": cert, "neg_holder_norms": neg.tolist(),
                  "sup_norm_err": [float(v) for v in np.mean(sup**cfg.p, axis=0) ** (1 / cfg.p)],
                  "neg_holder_fit": None if neg_fit is None else neg_fit.to_dict()}
    rep.manifest = manifest(cfg, cfg.seed, driver_hash=driver, grid={"T": cfg.T, "n": cfg.n_steps})
    rep.run_info = {"resumed_points": resumed}
    return rep


# --- periodic fast signals --------------------------------------------------------------

@dataclass(frozen=True)
class PeriodicConfig:
    """``f_n(t, x) = sum_j w_j (offset + sin(2 pi n t / tau_j)) h(x)``, ``h(x) = cos x``."""

    taus: tuple = (1.0,)
    weights: tuple = (1.0,)
    offset: float = 0.0
    n_grid: tuple = (1, 4, 16, 64)
    H: float = 0.75
    T: float = 1.0
    n_steps: int = 2048
    alpha: float = 0.5
    kappa: float = 0.3
    x_samples: tuple = (-1.0, -0.5, 0.0, 0.5, 1.0)
    x0: float = 0.3
    n_mc: int = 64
    p: float = 2.0
    seed: int = 0
    chunk: int = 32

    def __post_init__(self):
        if len(self.taus) != len(self.weights) or not self.taus:
            raise ConfigError("taus and weights must have the same nonzero length")

    @classmethod
    def profile(cls, name: str) -> "PeriodicConfig":
        if name == "smoke":
            return cls(n_grid=(1, 4, 16), n_mc=32, n_steps=1024)
        if name == "paper":
            return cls(n_grid=(1, 4, 16, 64, 256), n_mc=512, n_steps=2**13)
        raise ConfigError(f"unknown profile {name!r}")

    @classmethod
    def from_dict(cls, d, base=None):
        return from_mapping(cls, d, base)


def _periodic_f(cfg: PeriodicConfig, n: float):
    taus, w = np.asarray(cfg.taus, float), np.asarray(cfg.weights, float)

    def f(t, x):
        t = np.asarray(t, dtype=float)
        osc = np.sum(w * (cfg.offset + np.sin(2 * np.pi * n * t[..., None] / taus)), axis=-1)
        return osc * np.cos(x)
    return f


def period_average(cfg: PeriodicConfig, x, n_quad: int = 64):
    """Exact average over one period of each component (trapezoid rule is exact for sines)."""
    s = np.arange(n_quad) / n_quad
    one_period = np.mean(cfg.offset + np.sin(2 * np.pi * s))  # the same for every tau
    return float(np.sum(cfg.weights)) * one_period * np.cos(x)


def _periodic_chunk(cfg_d: dict, a: int, b: int, todo: tuple) -> dict:
    cfg = PeriodicConfig.from_dict(cfg_d)
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    B = sample_fbm(cfg.H, grid, b - a, seed=cfg.seed, path_start=a).paths[:, :, 0]
    out = {"hash": digest(B), "points": {}}
    db = np.diff(B, axis=1)[..., None]
    xbar = euler([cfg.x0], grid.h, lambda z: period_average(cfg, z), db)[..., 0]
    t = grid.points
    for i in todo:
        fn = _periodic_f(cfg, cfg.n_grid[i])
        x = euler([cfg.x0], grid.h, lambda z, k, fn=fn: fn(t[k], z), db, indexed=True)[..., 0]
        out["points"][i] = {"errors": holder_seminorms(x - xbar, grid.h, cfg.alpha)}
    return out


def run_periodic_example(cfg: PeriodicConfig, jobs: int = 1, cache_dir=None) -> ConvergenceReport:
    """Solution errors and ``|f_n - fbar|_{-kappa,1}`` over the speed factors."""
    grid = TimeGrid(0.0, cfg.T, cfg.n_steps)
    xs = np.asarray(cfg.x_samples, dtype=float)
    negs = []
    for n in cfg.n_grid:
        fn = _periodic_f(cfg, n)
        negs.append(neg_holder_xdep_norm(lambda t, x, fn=fn: fn(t, x[0]) - period_average(cfg, x[0]), xs, grid,
                                         cfg.kappa, 1.0).value)
    negs = np.array(negs)
    cache = PointCache(cache_dir, cfg) if cache_dir is not None else None
    points, driver, resumed = gather_points(_periodic_chunk, cfg, len(cfg.n_grid), jobs, cache)
    errors = np.stack([points[i]["errors"] for i in range(len(cfg.n_grid))], axis=1)
    fast_n = np.asarray(cfg.n_grid) > 1
    rep = build_report("periodic", "n", cfg.n_grid, errors, cfg.p, decreasing_param=False, seed=cfg.seed,
                       fit_mask=fast_n)
    neg_fit = loglog_fit(np.asarray(cfg.n_grid)[fast_n], negs[fast_n]) if fast_n.sum() > 1 else None
    rep.checks = {
        "neg_holder_decay": neg_fit is not None and -neg_fit.slope >= cfg.kappa - 0.1,
        "solution_error_decay": rep.kappa_ci is not None and rep.kappa_ci[0] > 0,
    }
    rep.extras = {"neg_holder_norms": negs.tolist(), "neg_holder_fit": None if neg_fit is None else neg_fit.to_dict()}
    rep.manifest = manifest(cfg, cfg.seed, driver_hash=driver, grid={"T": cfg.T, "n": cfg.n_steps})
    rep.run_info = {"resumed_points": resumed}
    return rep
