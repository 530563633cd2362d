"""Dyadic sewing of two-parameter germs and Young integration.

A germ is evaluated on index pairs of a dyadic grid.  ``sew`` forms the
Riemann sums over the dyadic partitions of every level and records how
much the cumulative sums move from one level to the next; a germ whose
defect ``A_st - A_su - A_ut`` is of order ``|t-s|^eta_bar`` with
``eta_bar > 1`` produces changes contracting by ``2^(1-eta_bar)`` per level.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

import numpy as np

from . import rng as _rng
from .gridpath import GridPath, TimeGrid
from .stats import PowerFit, loglog_fit


class NonDyadicGridError(ValueError):
    pass


@dataclass(frozen=True)
class Germ:
    """``eval(s_idx, t_idx)`` returns an array of shape (len(s_idx), d) or (len(s_idx),)."""

    eval: Callable[[np.ndarray, np.ndarray], np.ndarray]
    eta: float | None = None
    eta_bar: float | None = None

    def __call__(self, s_idx, t_idx) -> np.ndarray:
        out = np.asarray(self.eval(np.asarray(s_idx), np.asarray(t_idx)), dtype=float)
        return out[:, None] if out.ndim == 1 else out


@dataclass(frozen=True)
class SewingResult:
    integral: GridPath
    levels_used: int
    defect_profile: np.ndarray = field(repr=False)  # rows (level, max change)
    contracting: bool = True

    def contraction_factors(self) -> np.ndarray:
        ch = self.defect_profile[:, 1]
        with np.errstate(divide="ignore", invalid="ignore"):
            return ch[1:] / ch[:-1]


def _level(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise NonDyadicGridError(f"grid with {n} intervals is not dyadic")
    return n.bit_length() - 1


def sew(germ: Germ, grid: TimeGrid, max_level: int | None = None) -> SewingResult:
    """Riemann sums of ``germ`` over dyadic partitions of ``grid``.

    Level ``l`` splits the interval into ``2^l`` pieces. The returned
    integral is the cumulative sum at the finest level; ``defect_profile``
    lists, for each level ``l >= 1``, the largest change of the cumulative
    sums at the points of level ``l-1``.
    """
    L = _level(grid.n)
    if max_level is None:
        max_level = L
    if max_level != L:
        raise NonDyadicGridError(f"grid has 2^{L} intervals but max_level={max_level}")
    prev = None
    profile = []
    for lev in range(L + 1):
        step = grid.n >> lev
        s = np.arange(0, grid.n, step)
        vals = germ(s, s + step)
        cum = np.vstack([np.zeros((1, vals.shape[1])), np.cumsum(vals, axis=0)])
        if prev is not None:
            change = np.max(np.abs(cum[::2] - prev))
            profile.append((lev, change))
        prev = cum
    profile = np.array(profile, dtype=float).reshape(-1, 2)
    contracting = _is_contracting(profile[:, 1], float(np.max(np.abs(prev))))
    if not contracting:
        warnings.warn("dyadic Riemann sums do not contract; the germ may violate eta_bar > 1",
                      RuntimeWarning, stacklevel=2)
    return SewingResult(GridPath(grid, prev), L, profile, contracting)


def _is_contracting(changes: np.ndarray, magnitude: float, tail: int = 4) -> bool:
    # changes at rounding level of the integral itself count as converged
    c = changes[-tail:]
    if changes.size < 2 or np.all(c <= 1e-12 * max(magnitude, 1e-300)):
        return True
    c = np.maximum(c, 1e-300)
    return bool(np.mean(np.log(c[1:] / c[:-1])) < 0)


# --- Young integration ---------------------------------------------------------

def _product(f: np.ndarray, dg: np.ndarray) -> np.ndarray:
    if f.shape[-1] == dg.shape[-1] or f.shape[-1] == 1 or dg.shape[-1] == 1:
        return f * dg
    raise ValueError("integrand and integrator dimensions are incompatible")


def young_germ(f: GridPath, g: GridPath) -> Germ:
    fv, gv = f.values, g.values
    return Germ(lambda s, t: _product(fv[s], gv[t] - gv[s]))


def young_integral(f: GridPath, g: GridPath) -> GridPath:
    """``t -> int_0^t f dg`` by sewing the germ ``f_s (g_t - g_s)``.

    Components are integrated one by one; a scalar side is broadcast.
    """
    if f.grid != g.grid:
        raise ValueError("f and g live on different grids")
    if f.grid.is_dyadic():
        return sew(young_germ(f, g), f.grid).integral
    incr = _product(f.values[:-1], np.diff(g.values, axis=0))
    return GridPath(f.grid, np.vstack([np.zeros((1, incr.shape[1])), np.cumsum(incr, axis=0)]))


def young_cumsum(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Batched left-point Young integral along axis -2 (arrays (..., n+1, d))."""
    incr = _product(f[..., :-1, :], np.diff(g, axis=-2))
    zero = np.zeros(incr.shape[:-2] + (1, incr.shape[-1]))
    return np.concatenate([zero, np.cumsum(incr, axis=-2)], axis=-2)


def young_remainder_ratios(f: GridPath, g: GridPath, alpha: float, beta: float, f_norm: float,
                           g_norm: float, levels: Sequence[int] | None = None) -> np.ndarray:
    """``|int_s^t f dg - f_s (g_t - g_s)| / (|f|_a |g|_b |t-s|^(a+b))`` on dyadic pairs.

    The pairs are the cells of each dyadic level in ``levels``; the largest
    ratio of every level is returned.
    """
    I = young_integral(f, g).values
    L = _level(f.grid.n)
    levels = range(L) if levels is None else levels
    out = []
    for lev in levels:
        step = f.grid.n >> lev
        s = np.arange(0, f.grid.n, step)
        t = s + step
        rem = I[t] - I[s] - _product(f.values[s], g.values[t] - g.values[s])
        mag = np.sqrt(np.sum(rem**2, axis=-1))
        out.append(np.max(mag) / (f_norm * g_norm * (step * f.grid.h) ** (alpha + beta)))
    return np.array(out)


# --- conditional defect norms --------------------------------------------------

class CoupledGerm(Protocol):
    """A germ whose randomness after the past-freezing time can be redrawn.

    Each call redraws everything after ``s`` given the frozen past and
    returns ``n`` samples stacked along the first axis.
    """

    def germ(self, s: float, t: float, n: int, rng: np.random.Generator) -> np.ndarray: ...

    def defect(self, s: float, u: float, t: float, n: int, rng: np.random.Generator) -> np.ndarray: ...


@dataclass(frozen=True)
class DefectNorms:
    sup_norm_eta: PowerFit
    cond_norm_etabar: PowerFit
    p: int
    spans: np.ndarray = field(repr=False)
    sup_values: np.ndarray = field(repr=False)
    cond_values: np.ndarray = field(repr=False)
    noise_floor: np.ndarray = field(repr=False)
    n_outer: int = 0
    n_inner: int = 0
    seed: int = 0

    @property
    def noise_dominated(self) -> np.ndarray:
        return self.cond_values <= 2 * self.noise_floor

    def to_json(self) -> str:
        return json.dumps({
            "p": self.p,
            "eta_fit": self.sup_norm_eta.to_dict(),
            "etabar_fit": self.cond_norm_etabar.to_dict(),
            "r2": {"eta": self.sup_norm_eta.r2, "etabar": self.cond_norm_etabar.r2},
            "n_outer": self.n_outer,
            "n_inner": self.n_inner,
            "seed": self.seed,
        }, sort_keys=True)


def conditional_defect_norms(germ_factory: Callable[[np.random.Generator], CoupledGerm],
                             triples: Sequence[tuple[float, float, float]], p: int = 2,
                             n_outer: int = 64, n_inner: int = 64, seed: int = 0) -> DefectNorms:
    """Two-level Monte Carlo for ``||A_st||_p`` and ``||E(dA_sut | F_s)||_p``.

    ``germ_factory(rng)`` draws the past (outer level). The returned handle
    redraws the future ``n_inner`` times; the inner mean estimates the
    conditional expectation. Points whose estimate does not clear twice the
    inner-sampling noise floor are clipped to that floor before fitting, so
    the fitted constant then measures the floor rather than the signal.
    """
    triples = [tuple(map(float, tr)) for tr in triples]
    m = len(triples)
    cond = np.zeros((n_outer, m))
    sup = np.zeros((n_outer, m))
    inner_var = np.zeros((n_outer, m))
    for i in range(n_outer):
        handle = germ_factory(_rng.stream(seed, _rng.MISC, i))
        for j, (s, u, t) in enumerate(triples):
            g = _rng.stream(seed, _rng.INNER, i, j)
            d = np.atleast_2d(np.asarray(handle.defect(s, u, t, n_inner, g), dtype=float).reshape(n_inner, -1))
            mean = d.mean(axis=0)
            cond[i, j] = np.sqrt(np.sum(mean**2))
            inner_var[i, j] = np.sum(d.var(axis=0, ddof=1)) / n_inner if n_inner > 1 else 0.0
            a = np.asarray(handle.germ(s, t, n_inner, g), dtype=float).reshape(n_inner, -1)
            sup[i, j] = np.mean(np.sum(a**2, axis=1) ** (p / 2))
    spans = np.array([t - s for s, _, t in triples])
    cond_lp = np.mean(cond**p, axis=0) ** (1 / p)
    sup_lp = np.mean(sup, axis=0) ** (1 / p)
    floor = np.sqrt(np.mean(inner_var, axis=0))
    tiny = 1e-14 * max(float(sup_lp.max()), 1e-300)
    floor = np.maximum(floor, tiny)
    fit_vals = np.where(cond_lp <= 2 * floor, np.maximum(cond_lp, floor), cond_lp)
    return DefectNorms(loglog_fit(spans, np.maximum(sup_lp, tiny)), loglog_fit(spans, fit_vals), p, spans,
                       sup_lp, cond_lp, floor, n_outer, n_inner, seed)


# --- composition with negative-regularity integrands ------------------------

def compose_neg_holder(f_hat: Callable[[np.ndarray, np.ndarray], np.ndarray], x: GridPath, kappa: float,
                       gamma: float, alpha: float | None = None) -> GridPath:
    """Primitive of ``r -> f(r, x_r)`` given the time-primitive ``f_hat`` of ``f``.

    Sews the germ ``f_hat(t, x_s) - f_hat(s, x_s)``. ``f_hat(t, x)`` is called
    with matching arrays of times and states (shape (k, d)).
    """
    if alpha is not None and gamma * alpha <= kappa:
        warnings.warn("gamma * alpha <= kappa: sewing may not converge", RuntimeWarning, stacklevel=2)
    t = x.grid.points
    xv = x.values

    def ev(s, tt):
        return np.asarray(f_hat(t[tt], xv[s]), dtype=float) - np.asarray(f_hat(t[s], xv[s]), dtype=float)

    return sew(Germ(ev), x.grid).integral
