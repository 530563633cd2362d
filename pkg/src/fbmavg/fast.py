"""Fast diffusions on the circle with a frozen or moving slow state.

The fast variable solves the Stratonovich equation

    dY = eps^-1 V0(x, Y) dt + eps^-1/2 sum_k V_k(x, Y) o dW_k

on [0, 2 pi). Vector fields are callables ``V(x, y)`` where ``x`` has shape
(..., d) and ``y`` shape (...); they must be 2 pi-periodic in ``y``.

The Itô form has drift ``b = eps^-1 (V0 + 1/2 sum V_k dV_k/dy)`` and
diffusion ``a = eps^-1 sum V_k^2``.  Its stationary density solves the
periodic Fokker--Planck equation with constant current, which on the circle
has a closed form for any number of fields; ``b / a`` does not involve eps,
so neither does the density.
"""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import linalg

from . import rng as _rng
from .gridpath import GridPath, circle_distance, osc_lip_norms
from .stats import PowerFit, loglog_fit

TWO_PI = 2 * np.pi
Field = Callable[[np.ndarray, np.ndarray], np.ndarray]


class ResolutionError(ValueError):
    """Raised when a fast step does not resolve the eps time scale."""


class EllipticityError(ValueError):
    pass


def _fd_y(fn: Field, x, y, step: float = 1e-5):
    return (fn(x, y + step) - fn(x, y - step)) / (2 * step)


@dataclass(frozen=True)
class FastSystem:
    V0: Field
    V: tuple[Field, ...]
    epsilon: float
    ellipticity: float
    dV: tuple[Field, ...] | None = None
    x_samples: np.ndarray = field(default_factory=lambda: np.zeros((1, 1)))
    n_check: int = 256

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        object.__setattr__(self, "V", tuple(self.V))
        xs = np.atleast_2d(np.asarray(self.x_samples, dtype=float))
        object.__setattr__(self, "x_samples", xs)
        y = TWO_PI * np.arange(self.n_check) / self.n_check
        for x in xs:
            if np.min(self.diffusion_sq(x, y)) < self.ellipticity:
                raise EllipticityError(f"sum of V_k^2 drops below {self.ellipticity} at x={x}")

    @property
    def m(self) -> int:
        return len(self.V)

    def with_epsilon(self, eps: float) -> "FastSystem":
        return FastSystem(self.V0, self.V, eps, self.ellipticity, self.dV, self.x_samples, self.n_check)

    def _x(self, x, y):
        x = np.asarray(x, dtype=float)
        if x.ndim == 0:
            x = x[None]
        y = np.asarray(y, dtype=float)
        if x.ndim == 1:
            return np.broadcast_to(x, y.shape + x.shape)
        return x

    def diffusion_sq(self, x, y) -> np.ndarray:
        xb = self._x(x, y)
        return sum(np.asarray(v(xb, y), dtype=float) ** 2 for v in self.V)

    def ito_parts(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        """Itô drift and squared diffusion, both without the 1/eps factor."""
        xb = self._x(x, y)
        y = np.asarray(y, dtype=float)
        drift = np.asarray(self.V0(xb, y), dtype=float) + 0.0 * y
        a = np.zeros_like(drift)
        for k, v in enumerate(self.V):
            vk = np.asarray(v(xb, y), dtype=float) + 0.0 * y
            dvk = self.dV[k](xb, y) if self.dV is not None else _fd_y(v, xb, y)
            drift = drift + 0.5 * vk * dvk
            a = a + vk**2
        return drift, a

    @classmethod
    def von_mises(cls, eps: float, coupled: bool = False, strength: float = 1.0) -> "FastSystem":
        """``V0 = -strength sin(y - x)`` (or ``-strength sin y``), one unit field.

        The invariant law is von Mises with concentration ``2 * strength``
        centred at ``x`` (or at 0).
        """
        if coupled:
            v0 = lambda x, y: -strength * np.sin(y - x[..., 0])
        else:
            v0 = lambda x, y: -strength * np.sin(y) + 0.0 * x[..., 0]
        one = lambda x, y: np.ones_like(np.asarray(y, dtype=float))
        zero = lambda x, y: np.zeros_like(np.asarray(y, dtype=float))
        return cls(v0, (one,), eps, 1.0, dV=(zero,))


# --- stepping ---------------------------------------------------------------------

def _check_dt(sys: FastSystem, dt: float) -> None:
    if dt > sys.epsilon / 10 * (1 + 1e-12):
        raise ResolutionError(f"dt={dt:g} exceeds eps/10={sys.epsilon / 10:g}")


def _heun(sys: FastSystem, x, y, dt: float, noise) -> np.ndarray:
    y = np.asarray(y, dtype=float)
    xb = sys._x(x, y)
    dw = np.asarray(noise, dtype=float) * np.sqrt(dt)
    if dw.shape[-1:] != (sys.m,):
        dw = dw.reshape(y.shape + (sys.m,))
    inv_e, inv_se = 1.0 / sys.epsilon, 1.0 / np.sqrt(sys.epsilon)
    a0 = sys.V0(xb, y) * inv_e
    b0 = [v(xb, y) * inv_se for v in sys.V]
    pred = y + a0 * dt + sum(b * dw[..., k] for k, b in enumerate(b0))
    a1 = sys.V0(xb, pred) * inv_e
    b1 = [v(xb, pred) * inv_se for v in sys.V]
    new = y + 0.5 * (a0 + a1) * dt + sum(0.5 * (b0[k] + b1[k]) * dw[..., k] for k in range(sys.m))
    return np.mod(new, TWO_PI)


def step_frozen(sys: FastSystem, x, y, dt: float, noise) -> np.ndarray:
    """One Heun step with the slow state frozen at ``x``.

    ``noise`` holds standard normal draws of shape ``y.shape + (m,)``.
    """
    _check_dt(sys, dt)
    return _heun(sys, x, y, dt, noise)


def step_feedback(sys: FastSystem, x_path: GridPath, t: float, y, dt: float, noise) -> np.ndarray:
    """One Heun step with the slow state read off ``x_path`` at the left endpoint ``t``."""
    _check_dt(sys, dt)
    return _heun(sys, interpolate(x_path, t), y, dt, noise)


def step_ito_euler(sys: FastSystem, x, y, dt: float, noise) -> np.ndarray:
    """Euler step of the Itô-converted equation, kept as a cross-check for Heun."""
    _check_dt(sys, dt)
    y = np.asarray(y, dtype=float)
    xb = sys._x(x, y)
    drift, _ = sys.ito_parts(xb, y)
    dw = np.asarray(noise, dtype=float) * np.sqrt(dt)
    diff = sum(v(xb, y) * dw[..., k] for k, v in enumerate(sys.V)) / np.sqrt(sys.epsilon)
    return np.mod(y + drift * dt / sys.epsilon + diff, TWO_PI)


def interpolate(x_path: GridPath, t) -> np.ndarray:
    g = x_path.grid
    t = float(t)
    pos = (t - g.t0) / g.h
    k = int(np.clip(np.floor(pos + 1e-9), 0, g.n - 1))
    w = pos - k
    v = x_path.values
    if abs(w) < 1e-9:
        return v[k].copy()
    if abs(w - 1) < 1e-9:
        return v[k + 1].copy()
    return v[k] + w * (v[k + 1] - v[k])


def simulate_frozen(sys: FastSystem, x, y0, t: float, dt: float, rng: np.random.Generator,
                    record_every: int | None = None) -> np.ndarray:
    """Heun trajectories from ``y0`` (any shape) up to time ``t``.

    Returns the final states, or with ``record_every`` the states every that
    many steps stacked on a new leading axis (including the start).
    """
    n = int(round(t / dt))
    if n and abs(n * dt - t) > 1e-9 * max(t, 1):
        raise ValueError("t must be a multiple of dt")
    _check_dt(sys, dt)
    y = np.array(y0, dtype=float)
    rec = [y.copy()] if record_every else None
    for k in range(n):
        y = _heun(sys, x, y, dt, rng.standard_normal(y.shape + (sys.m,)))
        if record_every and (k + 1) % record_every == 0:
            rec.append(y.copy())
    return np.stack(rec) if record_every else y


# --- invariant density --------------------------------------------------------------

@dataclass(frozen=True)
class InvariantDensity:
    x: np.ndarray
    grid: np.ndarray  # y_j = 2 pi j / n
    density: np.ndarray

    @property
    def dy(self) -> float:
        return TWO_PI / len(self.grid)

    def mean_of(self, values) -> float:
        return float(np.sum(np.asarray(values) * self.density) * self.dy)

    def tv_distance(self, other) -> float:
        q = other.density if isinstance(other, InvariantDensity) else np.asarray(other)
        return float(0.5 * np.sum(np.abs(self.density - q)) * self.dy)

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Inverse-CDF draws using the piecewise-linear interpolant of the density."""
        p = np.append(self.density, self.density[0])
        cdf = np.concatenate([[0.0], np.cumsum(0.5 * (p[1:] + p[:-1]) * self.dy)])
        cdf /= cdf[-1]
        yy = np.append(self.grid, TWO_PI)
        return np.interp(rng.uniform(size=n), cdf, yy)

    def to_csv(self, fh) -> None:
        w = csv.writer(fh)
        w.writerow(["y", "density"])
        for y, d in zip(self.grid, self.density):
            w.writerow([repr(float(y)), repr(float(d))])


def invariant_density(sys: FastSystem, x, n_y: int = 512) -> InvariantDensity:
    """Stationary density of the frozen-x fast process, computed spectrally.

    With ``Phi' = 2 b / a = c0 + phi'`` (``phi`` periodic), the density is
    proportional to ``e^phi / a * int_0^{2pi} e^{-c0 w} e^{-phi(y+w)} dw``;
    the integral is evaluated mode by mode in Fourier space.
    """
    y = TWO_PI * np.arange(n_y) / n_y
    drift, a = sys.ito_parts(x, y)
    if np.min(a) < sys.ellipticity or np.min(a) <= 0:
        raise EllipticityError("sum of V_k^2 vanishes or drops below the declared bound")
    ratio = 2 * drift / a
    rh = np.fft.fft(ratio) / n_y
    c0 = rh[0].real
    k = np.fft.fftfreq(n_y, d=1.0 / n_y)
    ph = np.zeros_like(rh)
    nz = k != 0
    ph[nz] = rh[nz] / (1j * k[nz])
    phi = np.real(np.fft.ifft(ph * n_y))
    phi -= phi.max()
    u = np.exp(-phi)
    uh = np.fft.fft(u) / n_y
    # int_0^{2pi} e^{(ik - c0) w} dw, with the c0 -> 0 limit taken exactly
    if abs(c0) < 1e-14:
        kern = np.where(nz, 0.0, TWO_PI).astype(complex)
    else:
        kern = -np.expm1(-TWO_PI * c0) / (c0 - 1j * k)
    g = np.real(np.fft.ifft(uh * kern * n_y))
    dens = np.exp(phi) * g / a
    if np.min(dens) < -1e-12 * np.max(dens):
        raise RuntimeError("negative stationary density; check the vector fields")
    dens = np.maximum(dens, 0.0)
    dens /= np.sum(dens) * (TWO_PI / n_y)
    return InvariantDensity(np.atleast_1d(np.asarray(x, dtype=float)), y, dens)


def occupation_density(sys: FastSystem, x, n_steps: int, dt: float | None = None, n_bins: int = 128,
                       n_chains: int = 100, seed: int = 0) -> InvariantDensity:
    """Histogram of long-run occupation, an independent route to the invariant law."""
    dt = sys.epsilon / 20 if dt is None else dt
    g = _rng.stream(seed, _rng.FAST, 0)
    y = g.uniform(0, TWO_PI, n_chains)
    per = max(1, n_steps // n_chains)
    burn = int(5 * sys.epsilon / dt)
    counts = np.zeros(n_bins)
    for k in range(burn + per):
        y = _heun(sys, x, y, dt, g.standard_normal((n_chains, sys.m)))
        if k >= burn:
            counts += np.bincount(np.minimum((y / TWO_PI * n_bins).astype(int), n_bins - 1), minlength=n_bins)
    dy = TWO_PI / n_bins
    return InvariantDensity(np.atleast_1d(np.asarray(x, dtype=float)), (np.arange(n_bins) + 0.5) * dy,
                            counts / (counts.sum() * dy))


def averaged_coefficient(f: Callable, sys: FastSystem, x, density: InvariantDensity | None = None,
                         n_y: int = 512):
    """``int f(x, y) mu^x(dy)``; ``f(x, y)`` may return scalars or arrays (..., k)."""
    dens = invariant_density(sys, x, n_y) if density is None else density
    xb = np.broadcast_to(np.atleast_1d(np.asarray(x, dtype=float)), dens.grid.shape + (np.size(x),))
    vals = np.asarray(f(xb, dens.grid), dtype=float)
    if vals.ndim == 0:
        return float(vals)
    vals = np.broadcast_to(vals, dens.grid.shape + vals.shape[1:]) if vals.shape[:1] != dens.grid.shape else vals
    out = np.tensordot(dens.density * dens.dy, vals, axes=(0, 0))
    return float(out) if np.ndim(out) == 0 else out


# --- semigroup --------------------------------------------------------------------

@dataclass(frozen=True)
class SemigroupEstimate:
    times: np.ndarray
    grid: np.ndarray
    values: np.ndarray    # (len(times), len(grid))
    mc_bands: np.ndarray  # standard errors, same shape

    def osc(self) -> np.ndarray:
        return np.ptp(self.values, axis=1)


def semigroup_apply(sys: FastSystem, x, F: Callable[[np.ndarray], np.ndarray], t, n_mc: int = 1000,
                    n_y: int = 32, dt: float | None = None, seed: int = 0,
                    common_noise: bool = False) -> SemigroupEstimate:
    """Monte Carlo ``P_t F(y) = E F(Y_t^y)`` at ``n_y`` starting points and times ``t``.

    ``t`` may be a scalar or an increasing array of multiples of ``dt``.
    With ``common_noise`` every starting point uses the same noise, which
    lowers the variance of differences between starting points or between
    two slow states run with the same seed.
    """
    dt = sys.epsilon / 20 if dt is None else dt
    _check_dt(sys, dt)
    times = np.atleast_1d(np.asarray(t, dtype=float))
    steps = np.rint(times / dt).astype(int)
    if np.any(np.abs(steps * dt - times) > 1e-9 * np.maximum(times, 1)) or np.any(np.diff(steps) < 0):
        raise ValueError("times must be increasing multiples of dt")
    y0 = TWO_PI * np.arange(n_y) / n_y
    y = np.repeat(y0[:, None], n_mc, axis=1)
    g = _rng.stream(seed, _rng.FAST, 1)
    vals = np.empty((len(times), n_y))
    bands = np.empty((len(times), n_y))
    k = 0
    for j, s in enumerate(steps):
        while k < s:
            z = g.standard_normal((1 if common_noise else n_y, n_mc, sys.m))
            y = _heun(sys, x, y, dt, np.broadcast_to(z, (n_y, n_mc, sys.m)))
            k += 1
        fy = np.asarray(F(y), dtype=float)
        vals[j] = fy.mean(axis=1)
        bands[j] = fy.std(axis=1, ddof=1) / np.sqrt(n_mc) if n_mc > 1 else 0.0
    return SemigroupEstimate(times, y0, vals, bands)


def generator_matrix(sys: FastSystem, x, n_modes: int = 32) -> tuple[np.ndarray, np.ndarray]:
    """Fourier--Galerkin matrix of the generator on modes ``-n_modes..n_modes``."""
    n_y = 8 * n_modes
    y = TWO_PI * np.arange(n_y) / n_y
    drift, a = sys.ito_parts(x, y)
    bh = np.fft.fft(drift / sys.epsilon) / n_y
    ah = np.fft.fft(a / sys.epsilon) / n_y
    ks = np.arange(-n_modes, n_modes + 1)
    diff = ks[:, None] - ks[None, :]
    M = 1j * ks[None, :] * bh[diff % n_y] - 0.5 * ks[None, :] ** 2 * ah[diff % n_y]
    return M, ks


def semigroup_spectral(sys: FastSystem, x, F: Callable, t, n_modes: int = 32, n_y: int = 64) -> np.ndarray:
    """``P_t F`` on the grid ``2 pi j / n_y`` from the Galerkin matrix (reference values)."""
    M, ks = generator_matrix(sys, x, n_modes)
    nf = 8 * n_modes
    yf = TWO_PI * np.arange(nf) / nf
    fh = np.fft.fft(np.asarray(F(yf), dtype=float)) / nf
    coef = fh[ks % nf]
    out = linalg.expm(float(t) * M) @ coef
    y = TWO_PI * np.arange(n_y) / n_y
    return np.real(np.exp(1j * np.outer(y, ks)) @ out)


def spectral_gap(sys: FastSystem, x, n_modes: int = 32) -> float:
    ev = np.linalg.eigvals(generator_matrix(sys, x, n_modes)[0])
    re = np.sort(-ev.real)
    return float(re[1])


# --- diagnostics ------------------------------------------------------------------

def ergodicity_diagnostics(sys: FastSystem, x, F: Callable, t_grid, n_mc: int = 2000, n_y: int = 16,
                           seed: int = 0, floor_factor: float = 4.0) -> dict:
    """Fit ``log |P_t F|_Osc`` against ``t``; the slope estimates ``-c / eps``.

    Times where the oscillation is within ``floor_factor`` standard errors of
    the Monte Carlo floor are dropped from the fit window.
    """
    y = TWO_PI * np.arange(256) / 256
    if np.ptp(np.asarray(F(y), dtype=float)) == 0:
        raise ValueError("F must be non-constant")
    est = semigroup_apply(sys, x, F, t_grid, n_mc=n_mc, n_y=n_y, seed=seed, common_noise=True)
    osc = est.osc()
    floor = floor_factor * np.sqrt(2) * est.mc_bands.max(axis=1)
    keep = osc > floor
    if keep.sum() < 3:
        raise RuntimeError("oscillation hits the Monte Carlo floor too early for a fit")
    tt = est.times[keep]
    coef = np.polyfit(tt, np.log(osc[keep]), 1)
    slope = float(coef[0])
    return {"slope": slope, "c": -slope * sys.epsilon, "eps": sys.epsilon, "times": est.times.tolist(),
            "osc": osc.tolist(), "fit_window": tt.tolist()}


def x_continuity_check(sys: FastSystem, x, xbar, F: Callable, t_grid, n_mc: int = 2000, n_y: int = 16,
                       seed: int = 0, dt: float | None = None) -> dict:
    """``sup_y |P_t^x F(x, .) - P_t^xbar F(xbar, .)|`` by paired simulation with shared noise.

    ``F(x, y)`` may depend on the slow state. Returns the supremum per time,
    ``|x - xbar|``, ``|F|_Lip``, ``|F|_inf`` and the standard error of the
    paired difference at the maximising starting point.
    """
    dt = sys.epsilon / 20 if dt is None else dt
    _check_dt(sys, dt)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    xbar = np.atleast_1d(np.asarray(xbar, dtype=float))
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    steps = np.rint(times / dt).astype(int)
    y0 = TWO_PI * np.arange(n_y) / n_y
    y1 = np.repeat(y0[:, None], n_mc, axis=1)
    y2 = y1.copy()
    g = _rng.stream(seed, _rng.FAST, 4)
    lhs = np.empty(len(times))
    band = np.empty(len(times))
    k = 0
    for j, st in enumerate(steps):
        while k < st:
            z = np.broadcast_to(g.standard_normal((1, n_mc, sys.m)), (n_y, n_mc, sys.m))
            y1 = _heun(sys, x, y1, dt, z)
            y2 = _heun(sys, xbar, y2, dt, z)
            k += 1
        d = np.asarray(F(x, y1), dtype=float) - np.asarray(F(xbar, y2), dtype=float)
        m = np.abs(d.mean(axis=1))
        i = int(np.argmax(m))
        lhs[j] = m[i]
        band[j] = d[i].std(ddof=1) / np.sqrt(n_mc)
    yy = TWO_PI * np.arange(1024) / 1024
    lip = max(osc_lip_norms(F(x, yy))[1], osc_lip_norms(F(xbar, yy))[1])
    sup = max(np.max(np.abs(F(x, yy))), np.max(np.abs(F(xbar, yy))))
    return {"lhs": lhs, "dist": float(np.linalg.norm(x - xbar)), "lip": float(lip), "sup": float(sup),
            "times": times, "band": band}


def integrated_fluctuation(sys: FastSystem, x, F: Callable, t_grid, n_mc: int, seed: int = 0,
                           dt: float | None = None) -> np.ndarray:
    """Samples of ``int_0^t (F(y_r) - Fbar) dr`` for a stationary start; shape (n_mc, len(t_grid))."""
    dt = sys.epsilon / 20 if dt is None else dt
    dens = invariant_density(sys, x)
    fbar = dens.mean_of(F(dens.grid))
    g = _rng.stream(seed, _rng.FAST, 2)
    y = dens.sample(n_mc, g)
    times = np.atleast_1d(np.asarray(t_grid, dtype=float))
    steps = np.rint(times / dt).astype(int)
    out = np.empty((n_mc, len(times)))
    acc = np.zeros(n_mc)
    f_prev = F(y) - fbar
    k = 0
    for j, s in enumerate(steps):
        while k < s:
            y = _heun(sys, x, y, dt, g.standard_normal((n_mc, sys.m)))
            f_new = F(y) - fbar
            acc += 0.5 * (f_prev + f_new) * dt
            f_prev = f_new
            k += 1
        out[:, j] = acc
    return out


def ergodic_average_check(sys: FastSystem, x, F: Callable, t_grid, eps_grid, p: float = 2, n_mc: int = 1000,
                          seed: int = 0) -> dict:
    """Joint log-log regression of the L^p norm of the integrated fluctuation on ``eps`` and ``t``."""
    rows = []
    for i, eps in enumerate(eps_grid):
        s = sys.with_epsilon(eps)
        samples = integrated_fluctuation(s, x, F, t_grid, n_mc, seed=seed + i)
        norms = np.mean(np.abs(samples) ** p, axis=0) ** (1 / p)
        for t, v in zip(t_grid, norms):
            rows.append((np.log(eps), np.log(t), np.log(v) if v > 0 else -np.inf))
    rows = np.array(rows)
    if not np.all(np.isfinite(rows[:, 2])):
        return {"eps_slope": None, "t_slope": None, "norms": np.exp(rows[:, 2]).tolist(), "degenerate": True}
    A = np.column_stack([np.ones(len(rows)), rows[:, 0], rows[:, 1]])
    coef, *_ = np.linalg.lstsq(A, rows[:, 2], rcond=None)
    return {"eps_slope": float(coef[1]), "t_slope": float(coef[2]), "prefactor": float(np.exp(coef[0])),
            "norms": np.exp(rows[:, 2]).tolist(), "degenerate": False, "p": p}


def coupled_deviation(sys: FastSystem, x_path: GridPath, s: float, t: float, dt: float, n_mc: int,
                      seed: int = 0, y0=None) -> np.ndarray:
    """``sup_{u in [s,t]} rho(y_u, Y_{s,u})`` per sample, both flows driven by the same noise."""
    _check_dt(sys, dt)
    g = _rng.stream(seed, _rng.FAST, 3)
    y = g.uniform(0, TWO_PI, n_mc) if y0 is None else np.array(y0, dtype=float)
    Y = y.copy()
    xs = interpolate(x_path, s)
    n = int(round((t - s) / dt))
    worst = np.zeros_like(y)
    for k in range(n):
        z = g.standard_normal((len(y), sys.m))
        y = _heun(sys, interpolate(x_path, s + k * dt), y, dt, z)
        Y = _heun(sys, xs, Y, dt, z)
        worst = np.maximum(worst, circle_distance(y, Y))
    return worst


def flow_deviation_check(sys: FastSystem, x_path: GridPath, s: float, spans: Sequence[float], p: float = 2,
                         n_mc: int = 500, dt: float | None = None, seed: int = 0) -> dict:
    """L^p norm of the coupled flow deviation against ``|t - s|`` with a log-log fit."""
    dt = sys.epsilon / 200 if dt is None else dt
    norms = []
    for i, span in enumerate(spans):
        d = coupled_deviation(sys, x_path, s, s + span, dt, n_mc, seed=seed + i)
        norms.append(float(np.mean(d**p) ** (1 / p)))
    norms = np.array(norms)
    fit = loglog_fit(spans, norms) if len(norms) > 1 and np.all(norms > 0) else None
    return {"spans": list(map(float, spans)), "norms": norms.tolist(),
            "fit": None if fit is None else fit.to_dict()}


def verdict_json(name: str, **fields) -> str:
    def conv(v):
        if isinstance(v, np.ndarray):
            return v.tolist()
        if isinstance(v, PowerFit):
            return v.to_dict()
        if isinstance(v, (np.floating, np.integer)):
            return v.item()
        return v
    return json.dumps({"name": name, **{k: conv(v) for k, v in fields.items()}}, sort_keys=True)
