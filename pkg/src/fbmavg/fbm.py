"""Fractional Brownian motion: sampling, conditioning and covariance kernels.

Sampling is exact in law (circulant embedding of fractional Gaussian
noise). Conditioning on the past is exact Gaussian conditioning of the
discrete fBm vector. The kernels ``R`` and its mixed derivative refer to
the future part of the Mandelbrot--Van Ness representation,

    R(r, s) = int_0^{r^s} (r - v)^{H-1/2} (s - v)^{H-1/2} dv,

which carries no normalising constant.
"""
from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import integrate, linalg
from scipy.special import beta as beta_fn
from scipy.special import betainc

from . import rng as _rng
from .gridpath import GridPath, TimeGrid, neg_holder_norm, write_paths

JITTER = 1e-12


class EmbeddingError(RuntimeError):
    """Circulant embedding produced a negative eigenvalue."""


# --- sampling --------------------------------------------------------------

def fgn_autocovariance(k, H: float):
    """Autocovariance of unit-spacing fractional Gaussian noise at lag ``k``."""
    k = np.abs(np.asarray(k, dtype=float))
    return 0.5 * (np.abs(k + 1) ** (2 * H) - 2 * k ** (2 * H) + np.abs(k - 1) ** (2 * H))


@lru_cache(maxsize=32)
def _embedding_weights(n: int, H: float) -> np.ndarray:
    gam = fgn_autocovariance(np.arange(n + 1), H)
    row = np.concatenate([gam, gam[-2:0:-1]])
    lam = np.fft.fft(row).real
    if lam.min() < -1e-10 * lam.max():
        raise EmbeddingError(f"negative circulant eigenvalue {lam.min():.3e} (n={n}, H={H})")
    lam = np.clip(lam, 0.0, None)
    w = np.sqrt(lam / (2 * n))
    w.setflags(write=False)
    return w


@dataclass
class FbmEnsemble:
    """``n_paths`` independent fBm paths, stored as (n_paths, n+1, dims)."""

    H: float
    grid: TimeGrid
    paths: np.ndarray = field(repr=False)
    seed: int
    path_start: int = 0

    def __len__(self) -> int:
        return self.paths.shape[0]

    @property
    def dims(self) -> int:
        return self.paths.shape[2]

    def path(self, i: int) -> GridPath:
        return GridPath(self.grid, self.paths[i])

    def manifest(self) -> dict:
        return {
            "H": self.H,
            "n": self.grid.n,
            "n_paths": len(self),
            "seed": self.seed,
            "t0": self.grid.t0,
            "t1": self.grid.t1,
            "dims": self.dims,
            "path_start": self.path_start,
        }

    def save(self, stem: str | Path) -> tuple[Path, Path]:
        """Write ``stem.bin`` (GridPath records) and ``stem.json``."""
        stem = Path(stem)
        bin_path, man_path = stem.with_suffix(".bin"), stem.with_suffix(".json")
        write_paths(bin_path, (self.path(i) for i in range(len(self))))
        man_path.write_text(json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n")
        return bin_path, man_path


def sample_fbm(H: float, grid: TimeGrid, n_paths: int = 1, dims: int = 1, seed: int = 0,
               path_start: int = 0, chunk: int = 256) -> FbmEnsemble:
    """Sample fBm on ``grid`` by circulant embedding of fGn (Davies--Harte).

    Path ``i`` uses its own random stream keyed by ``(seed, path_start + i)``,
    so that ensembles can be generated in pieces (``path_start``) or in
    parallel and still agree bitwise with a single large call.
    """
    if not 0 < H < 1:
        raise ValueError("H must lie in (0, 1)")
    n = grid.n
    w = _embedding_weights(n, float(H))
    scale = grid.h**H
    out = np.zeros((n_paths, n + 1, dims))
    for c0 in range(0, n_paths, chunk):
        idx = range(path_start + c0, path_start + min(c0 + chunk, n_paths))
        z = _rng.normals(seed, (_rng.FBM,), idx, (dims, 2, 2 * n))
        coef = w * (z[:, :, 0] + 1j * z[:, :, 1])
        fgn = np.fft.fft(coef, axis=-1).real[..., :n] * scale
        out[c0 : c0 + len(idx), 1:, :] = np.cumsum(fgn, axis=-1).transpose(0, 2, 1)
    return FbmEnsemble(float(H), grid, out, int(seed), int(path_start))


def fbm_covariance(s, t, H: float):
    """Covariance of standard fBm started at time 0."""
    s = np.asarray(s, dtype=float)
    t = np.asarray(t, dtype=float)
    return 0.5 * (np.abs(s) ** (2 * H) + np.abs(t) ** (2 * H) - np.abs(t - s) ** (2 * H))


# --- conditioning ----------------------------------------------------------

def _chol(mat: np.ndarray, what: str) -> np.ndarray:
    try:
        return linalg.cholesky(mat, lower=True)
    except linalg.LinAlgError:
        warnings.warn(f"{what} covariance numerically singular; adding jitter {JITTER}", RuntimeWarning, stacklevel=3)
        return linalg.cholesky(mat + JITTER * np.eye(len(mat)), lower=True)


class FbmConditioner:
    """Exact Gaussian conditioning of fBm future values on past values.

    ``past_times`` must be positive (the value at time 0 is pinned to 0);
    ``future_times`` are the points where the conditional law is wanted.
    """

    def __init__(self, H: float, past_times, future_times):
        self.H = float(H)
        self.past_times = np.asarray(past_times, dtype=float)
        self.future_times = np.asarray(future_times, dtype=float)
        if self.past_times.size == 0:
            raise ValueError("empty past")
        spp = fbm_covariance(self.past_times[:, None], self.past_times[None, :], H)
        sfp = fbm_covariance(self.future_times[:, None], self.past_times[None, :], H)
        sff = fbm_covariance(self.future_times[:, None], self.future_times[None, :], H)
        lp = _chol(spp, "past")
        self.weights = linalg.cho_solve((lp, True), sfp.T).T
        schur = sff - self.weights @ sfp.T
        self.schur = 0.5 * (schur + schur.T)
        self.schur_chol = _chol(self.schur, "conditional")

    def mean(self, past_values: np.ndarray) -> np.ndarray:
        """Conditional mean of the future values; past_values is (..., n_past)."""
        return np.asarray(past_values, dtype=float) @ self.weights.T

    def sample(self, past_values: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
        """``n`` conditional draws, shape (n, n_future)."""
        z = rng.standard_normal((n, len(self.future_times)))
        return self.mean(past_values)[None, :] + z @ self.schur_chol.T


@lru_cache(maxsize=64)
def grid_conditioner(H: float, h: float, k_past: int, k_future: int) -> FbmConditioner:
    """Conditioner for past grid points ``h..k_past*h`` and the next ``k_future`` points."""
    past = h * np.arange(1, k_past + 1)
    fut = h * np.arange(k_past + 1, k_past + k_future + 1)
    return FbmConditioner(H, past, fut)


@dataclass(frozen=True)
class ConditionalSplit:
    """``B_t - B_u = bar_t + tilde_t`` on the grid after ``u``."""

    u: float
    bar: GridPath
    tilde: GridPath


def _split_index(grid: TimeGrid, u: float) -> int:
    k = grid.index(u)
    if k <= 0 or k >= grid.n:
        raise ValueError("split time must lie strictly inside the grid")
    return k


def split_arrays(paths: np.ndarray, grid: TimeGrid, u: float, H: float) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised split for paths of shape (n_paths, n+1, dims).

    Returns ``(bar, tilde)`` each of shape (n_paths, n-k+1, dims) on the
    grid points from ``u`` to ``t1``.
    """
    k = _split_index(grid, u)
    cond = grid_conditioner(float(H), grid.h, k, grid.n - k)
    past = np.moveaxis(paths[:, 1 : k + 1, :], 1, -1)
    b_u = paths[:, k, :]
    mean = np.moveaxis(cond.mean(past), -1, 1)
    bar = np.concatenate([np.zeros_like(b_u)[:, None], mean - b_u[:, None]], axis=1)
    tilde = (paths[:, k:, :] - b_u[:, None]) - bar
    return bar, tilde


def conditional_split(path: GridPath, u: float, H: float) -> ConditionalSplit:
    """Decompose the increment after ``u`` into its past-predictable part and the rest.

    ``bar`` is the conditional mean of ``B_t - B_u`` given the grid values on
    ``[t0, u]`` (fBm origin at ``t0``), and ``tilde`` the innovation.
    """
    if not 0.5 <= H < 1:
        raise ValueError("conditioning implemented for H in [1/2, 1)")
    bar, tilde = split_arrays(path.values[None], path.grid, u, H)
    k = path.grid.index(u)
    sub = path.grid.sub(k, path.grid.n)
    return ConditionalSplit(float(u), GridPath(sub, bar[0]), GridPath(sub, tilde[0]))


def sample_conditional_future(past: GridPath, future_grid: TimeGrid, n_samples: int, seed: int,
                              H: float) -> np.ndarray:
    """Draw ``B_t - B_u`` on ``future_grid`` given the past path on ``[t0, u]``.

    ``future_grid`` starts at ``u = past.grid.t1``. The result has shape
    (n_samples, len(future_grid), dims) and starts at zero.
    """
    if not 0.5 <= H < 1:
        raise ValueError("conditioning implemented for H in [1/2, 1)")
    if abs(future_grid.t0 - past.grid.t1) > 1e-12 * max(1.0, abs(past.grid.t1)):
        raise ValueError("future grid must start at the end of the past")
    t0 = past.grid.t0
    cond = FbmConditioner(H, past.times[1:] - t0, future_grid.points[1:] - t0)
    b_u = past.values[-1]
    out = np.zeros((n_samples, len(future_grid), past.dims))
    for j in range(past.dims):
        g = _rng.stream(seed, _rng.FBM, 0, j)
        out[:, 1:, j] = cond.sample(past.values[1:, j], n_samples, g) - b_u[j]
    return out


# --- kernels ---------------------------------------------------------------

@dataclass(frozen=True)
class KernelConstants:
    c1: float
    c2: float
    c3: float
    H: float


@lru_cache(maxsize=64)
def kernel_constants(H: float) -> KernelConstants:
    """Constants of the three-term representation of the mixed derivative of R."""
    a = H - 0.5
    c1 = a
    c3 = a * (H - 1.5)
    tail, _ = integrate.quad(lambda u: u**a * (1 + u) ** (H - 2.5), 0, np.inf, epsabs=0, epsrel=1e-13, limit=200)
    return KernelConstants(c1, -c3 * tail, c3, float(H))


def covariance_R(r: float, s: float, H: float) -> float:
    """Covariance of the innovation part ``tilde B`` at times ``r`` and ``s``."""
    if r <= 0 or s <= 0:
        raise ValueError("covariance_R needs r, s > 0")
    a = H - 0.5
    lo, hi = min(r, s), max(r, s)
    if lo == hi:
        return lo ** (2 * H) / (2 * H)
    # algebraic weight (lo - v)^a absorbs the endpoint singularity
    val, _ = integrate.quad(lambda v: (hi - v) ** a, 0.0, lo, weight="alg", wvar=(0.0, a),
                            epsabs=0, epsrel=1e-13, limit=200)
    return val


def d2R_closed(r: float, s: float, H: float, constants: KernelConstants | None = None) -> float:
    """Mixed derivative of R off the diagonal (three-term representation).

    ``constants`` overrides the computed ones, which is how a corrupted
    constant is injected as a negative control.
    """
    if r == s:
        raise ValueError("on-diagonal singularity")
    if r > s:
        r, s = s, r
    if r <= 0:
        raise ValueError("d2R_closed needs r, s > 0")
    k = kernel_constants(float(H)) if constants is None else constants
    a = H - 0.5
    d = s - r
    # v = r / w maps [r, inf) onto (0, 1]; the w^(1-2H) factor goes into the weight
    tail, _ = integrate.quad(lambda w: (r + d * w) ** (H - 2.5), 0.0, 1.0, weight="alg",
                             wvar=(1 - 2 * H, 0.0), epsabs=0, epsrel=1e-12, limit=200)
    tail *= r ** (H + 0.5)
    return k.c1 * r**a * s ** (H - 1.5) + k.c2 * d ** (2 * H - 2) + k.c3 * tail


def d2R(r, s, H: float):
    """Vectorised mixed derivative of R, valid for r != s.

    The tail integral is expressed through the regularised incomplete beta
    function, which makes this usable inside double quadratures.
    """
    r = np.asarray(r, dtype=float)
    s = np.asarray(s, dtype=float)
    lo, hi = np.minimum(r, s), np.maximum(r, s)
    return _d2R_singular_free(lo, hi, H) + kernel_constants(float(H)).c2 * (hi - lo) ** (2 * H - 2)


def _d2R_singular_free(lo, hi, H):
    """``d2R - c2 |s-r|^(2H-2)`` for ``lo <= hi``, bounded near the diagonal."""
    k = kernel_constants(float(H))
    a = H - 0.5
    d = hi - lo
    bfull = beta_fn(H + 0.5, 2 - 2 * H)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(hi > 0, d / hi, 0.0)
        tail = d ** (2 * H - 2) * bfull * betainc(2 - 2 * H, H + 0.5, z)
        tail = np.where(d > 0, tail, hi ** (2 * H - 2) / (2 - 2 * H))
    return k.c1 * lo**a * hi ** (H - 1.5) + k.c3 * tail


@lru_cache(maxsize=16)
def _rkhs_matrix(n: int, T: float, H: float, order: int) -> np.ndarray:
    h = T / n
    p = 2 * H
    k = kernel_constants(float(H))
    m = np.arange(n)
    # exact cell integrals of c2 |s-r|^(2H-2) depend only on the lag
    lag = np.abs(m[:, None] - m[None, :]).astype(float)
    sing = k.c2 * h**p / (p * (p - 1)) * (np.abs(lag + 1) ** p - 2 * lag**p + np.abs(lag - 1) ** p)
    xg, wg = np.polynomial.legendre.leggauss(order)
    nodes = ((m[:, None] + 0.5 * (xg[None, :] + 1)) * h).ravel()
    wts = np.tile(0.5 * wg * h, n)
    reg = np.empty((n, n))
    step = max(1, 2_000_000 // (nodes.size * order))
    for i0 in range(0, n, step):
        i1 = min(n, i0 + step)
        rows = nodes[i0 * order : i1 * order]
        rw = wts[i0 * order : i1 * order]
        lo = np.minimum(rows[:, None], nodes[None, :])
        hi = np.maximum(rows[:, None], nodes[None, :])
        vals = _d2R_singular_free(lo, hi, H) * rw[:, None] * wts[None, :]
        reg[i0:i1] = vals.reshape(i1 - i0, order, n, order).sum(axis=(1, 3))
    mat = sing + reg
    mat = 0.5 * (mat + mat.T)
    mat.setflags(write=False)
    return mat


def rkhs_norm_sq(h: GridPath, H: float, order: int = 3) -> float:
    """Signed double integral of ``d2R(r,s) h(r) h(s)`` over ``[t0, t1]^2``.

    ``h`` is treated as piecewise constant (cell averages). The singular part
    ``c2 |s-r|^(2H-2)`` is integrated exactly cell by cell and the bounded
    remainder by a tensor Gauss--Legendre rule of the given order.
    """
    if h.dims != 1:
        raise ValueError("rkhs_norm expects a scalar path")
    v = h.values[:, 0]
    cells = 0.5 * (v[1:] + v[:-1])
    mat = _rkhs_matrix(h.grid.n, float(h.grid.t1 - h.grid.t0), float(H), order)
    return float(cells @ mat @ cells)


def rkhs_norm(h: GridPath, H: float, order: int = 3) -> float:
    """Conditional standard deviation of ``int h d tilde B`` over the grid interval."""
    return float(np.sqrt(abs(rkhs_norm_sq(h, H, order))))


def rkhs_bound_ratios(H: float, ks, n: int = 1024, T: float = 1.0, kappa: float | None = None) -> dict:
    """``rkhs_norm(h) / (T^(H - kappa) |h|_{-kappa})`` for ``h = sin(2 pi k t / T)``."""
    kappa = (H - 0.5) / 2 if kappa is None else kappa
    g = TimeGrid(0.0, T, n)
    rk, neg = [], []
    for k in ks:
        path = GridPath(g, np.sin(2 * np.pi * k * g.points / T))
        rk.append(rkhs_norm(path, H))
        neg.append(neg_holder_norm(path, kappa).value)
    rk, neg = np.array(rk), np.array(neg)
    return {"ks": list(ks), "rkhs": rk, "neg_holder": neg, "ratio": rk / (T ** (H - kappa) * neg), "kappa": kappa}


# --- mixed integral ----------------------------------------------------------

def mixed_integral(F: GridPath, split: ConditionalSplit):
    """``int F dB`` over the post-split interval, integrating separately against both parts.

    Against the smooth part ``bar`` the Stieltjes sum uses the cell-wise
    finite-difference derivative with the trapezoidal value of ``F``; against
    ``tilde`` it is a left-point Riemann--Stieltjes sum.
    """
    if F.grid != split.bar.grid:
        raise ValueError("integrand and split live on different grids")
    f = F.values
    if f.shape[1] not in (1, split.bar.dims):
        raise ValueError("integrand dimension does not match the noise")
    dbar = np.diff(split.bar.values, axis=0)
    dtil = np.diff(split.tilde.values, axis=0)
    part_bar = np.sum(0.5 * (f[1:] + f[:-1]) * dbar, axis=0)
    part_tilde = np.sum(f[:-1] * dtil, axis=0)
    out = part_bar + part_tilde
    return float(out[0]) if out.size == 1 else out
