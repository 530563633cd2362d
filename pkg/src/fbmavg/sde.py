"""Young ODE and mixed Young/Itô SDE solvers, plus deterministic stability checks.

Both solvers share one explicit left-point step

    z_{k+1} = z_k + F(z_k) db_k + sigma(z_k) dW_k + G(z_k) h + dZ_k,

so that switching the Itô part off reproduces the Young solver bit for bit.
Coefficients act on batches: ``F(z)`` receives an array of shape
(batch, d) and returns either (batch, d, m) (matrix against an m-dim noise)
or (batch, d) (componentwise product with the increment).  With
``indexed=True`` they are called as ``F(z, k)`` with the step index ``k``,
which is how time-dependent coefficients are passed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .gridpath import GridPath, TimeGrid, holder_norms, holder_seminorm
from .stats import fit_exp_constant

BLOWUP = 1e8

Coefficient = Callable[..., np.ndarray]


class BlowUpError(RuntimeError):
    def __init__(self, time: float):
        super().__init__(f"solution left the ball of radius {BLOWUP:g} at t={time:.6g}")
        self.time = time


@dataclass(frozen=True)
class YoungOdeSpec:
    F: Coefficient
    driver: GridPath
    x0: np.ndarray
    G: Coefficient | None = None
    Z: GridPath | None = None
    indexed: bool = False


@dataclass(frozen=True)
class MixedSdeSpec:
    F: Coefficient
    sigma: Coefficient
    B: GridPath
    W: GridPath
    z0: np.ndarray
    G: Coefficient | None = None
    indexed: bool = False
    seeds: tuple[int, int] | None = None  # (B seed, W seed), recorded for reproducibility

    def __post_init__(self):
        if self.B.grid != self.W.grid:
            raise ValueError("B and W must share a grid")
        if self.seeds is not None and self.seeds[0] == self.seeds[1]:
            raise ValueError("B and W must come from different seeds")


def _act(coef: np.ndarray, inc: np.ndarray) -> np.ndarray:
    if coef.ndim == inc.ndim + 1:
        return np.einsum("bdm,bm->bd", coef, inc)
    return coef * inc


def euler(x0, h: float, F: Coefficient | None = None, db: np.ndarray | None = None,
          sigma: Coefficient | None = None, dw: np.ndarray | None = None, G: Coefficient | None = None,
          Z: np.ndarray | None = None, indexed: bool = False, t0: float = 0.0,
          bound: float = BLOWUP) -> np.ndarray:
    """Batched explicit scheme; increments have shape (batch, n, m).

    ``Z`` is the additive forcing as a path (batch, n+1, d); it is carried
    separately (``z = y + Z - Z_0``) so that it enters without rounding
    drift. Returns the solution with shape (batch, n+1, d). Any of the
    integrators may be omitted.
    """
    if Z is not None:
        Z = np.asarray(Z, dtype=float)
        Z = Z - Z[:, :1]
    incs = [a for a in (db, dw) if a is not None] + ([np.diff(Z, axis=1)] if Z is not None else [])
    if not incs:
        raise ValueError("no driving increments given")
    batch, n = incs[0].shape[:2]
    y = np.array(np.broadcast_to(np.asarray(x0, dtype=float), (batch, np.size(x0))))
    z = y
    out = np.empty((batch, n + 1, y.shape[1]))
    out[:, 0] = y

    def call(c, zz, k):
        return np.asarray(c(zz, k) if indexed else c(zz), dtype=float)

    for k in range(n):
        step = np.zeros_like(y)
        if F is not None:
            step = step + _act(call(F, z, k), db[:, k])
        if sigma is not None:
            step = step + _act(call(sigma, z, k), dw[:, k])
        if G is not None:
            step = step + call(G, z, k) * h
        y = y + step
        z = y if Z is None else y + Z[:, k + 1]
        if not np.all(np.abs(z) < bound):
            raise BlowUpError(t0 + (k + 1) * h)
        out[:, k + 1] = z
    return out


def solve_young(spec: YoungOdeSpec) -> GridPath:
    """Left-point solution of ``z = Z + int F(z) db + int G(z) dt`` started at ``x0``."""
    g = spec.driver.grid
    if spec.Z is not None and spec.Z.grid != g:
        raise ValueError("forcing and driver grids differ")
    db = np.diff(spec.driver.values, axis=0)[None]
    Z = None if spec.Z is None else spec.Z.values[None]
    z = euler(spec.x0, g.h, spec.F, db, G=spec.G, Z=Z, indexed=spec.indexed, t0=g.t0)
    return GridPath(g, z[0])


def solve_mixed(spec: MixedSdeSpec) -> GridPath:
    """Left-point Young step for ``B`` and Euler--Maruyama for the Itô part."""
    g = spec.B.grid
    db = np.diff(spec.B.values, axis=0)[None]
    dw = np.diff(spec.W.values, axis=0)[None]
    z = euler(spec.z0, g.h, spec.F, db, spec.sigma, dw, spec.G, indexed=spec.indexed, t0=g.t0)
    return GridPath(g, z[0])


# --- deterministic checks -----------------------------------------------------------

def verdict(name: str, lhs: float, rhs: float, fitted_C: float | None) -> dict:
    return {"name": name, "lhs": float(lhs), "rhs": float(rhs),
            "fitted_C": None if fitted_C is None else float(fitted_C), "pass": bool(lhs <= rhs)}


def _norm(path: GridPath, alpha: float) -> float:
    # inhomogeneous norm, so that a shift of the forcing is seen by the estimate
    return float(holder_norms(path.values[None], path.grid.h, alpha)[0])


@dataclass(frozen=True)
class StabilityTerms:
    lhs: float      # |z - zbar|_alpha
    spread: float   # |b|_beta^(1/beta) + |Z|_alpha^(1/alpha) + |Zbar|_alpha^(1/alpha)
    diff: float     # |Z - Zbar|_alpha

    @property
    def ratio(self) -> float:
        return self.lhs / self.diff if self.diff > 0 else 0.0


def stability_terms(F: Coefficient, driver: GridPath, Z: GridPath, Zbar: GridPath, alpha: float,
                    beta: float) -> StabilityTerms:
    """Solve ``z = Z + int F(z) db`` and its twin with ``Zbar`` and collect the norms.

    Both solutions start from the forcing's initial value.
    """
    if not (0 < alpha <= beta and alpha + beta > 1):
        raise ValueError("need 0 < alpha <= beta and alpha + beta > 1")
    z = solve_young(YoungOdeSpec(F, driver, Z.values[0], Z=Z)).values
    zb = solve_young(YoungOdeSpec(F, driver, Zbar.values[0], Z=Zbar)).values
    g = driver.grid
    lhs = _norm(GridPath(g, z - zb), alpha)
    spread = (holder_seminorm(driver, beta).value ** (1 / beta) + _norm(Z, alpha) ** (1 / alpha)
              + _norm(Zbar, alpha) ** (1 / alpha))
    diff = _norm(GridPath(g, Z.values - Zbar.values), alpha)
    return StabilityTerms(lhs, spread, diff)


def fit_stability_constant(terms: list[StabilityTerms]) -> float:
    """Smallest C with ``lhs <= C exp(C spread) diff`` on every calibration member."""
    return fit_exp_constant([t.ratio for t in terms], [t.spread for t in terms])


def residual_stability_check(F: Coefficient, driver: GridPath, Z: GridPath, Zbar: GridPath, alpha: float,
                             beta: float, C: float) -> tuple[float, float, float]:
    """``(lhs, rhs, lhs/rhs)`` for the stability estimate with constant ``C``."""
    t = stability_terms(F, driver, Z, Zbar, alpha, beta)
    rhs = C * np.exp(C * t.spread) * t.diff
    ratio = t.lhs / rhs if rhs > 0 else (0.0 if t.lhs == 0 else np.inf)
    return t.lhs, float(rhs), float(ratio)


def composition_terms(F: Callable[[np.ndarray], np.ndarray], dF_sup: float, d2F_sup: float, x: GridPath,
                      y: GridPath, alpha: float) -> tuple[float, float]:
    """``|F(x) - F(y)|_alpha`` and ``|F'| |x-y|_alpha + |F''| |x-y|_inf (|x|_alpha + |y|_alpha)``."""
    g = x.grid
    lhs = holder_seminorm(GridPath(g, F(x.values) - F(y.values)), alpha).value
    dxy = GridPath(g, x.values - y.values)
    rhs = (dF_sup * holder_seminorm(dxy, alpha).value
           + d2F_sup * float(np.max(np.abs(dxy.values)))
           * (holder_seminorm(x, alpha).value + holder_seminorm(y, alpha).value))
    return float(lhs), float(rhs)


def composition_bound_check(F, dF_sup: float, d2F_sup: float, x: GridPath, y: GridPath, alpha: float,
                            C: float = 1.0) -> tuple[float, float]:
    """``(lhs, C * rhs)``; with bounded derivatives the estimate holds with ``C = 1``."""
    lhs, rhs = composition_terms(F, dF_sup, d2F_sup, x, y, alpha)
    return lhs, C * rhs


def wiener_path(grid: TimeGrid, dims: int, rng: np.random.Generator) -> GridPath:
    inc = rng.standard_normal((grid.n, dims)) * np.sqrt(grid.h)
    return GridPath(grid, np.vstack([np.zeros((1, dims)), np.cumsum(inc, axis=0)]))
