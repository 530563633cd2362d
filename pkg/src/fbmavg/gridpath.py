"""Uniform time grids, paths sampled on them, and Hölder-type norms.

All suprema are taken over every pair of grid points, which makes the
reported values lower bounds for the corresponding continuum norms.  The
pair scan is ``O(n^2)``; pass ``stride`` to evaluate on a coarser sub-grid
when ``n`` is large.
"""
from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import BinaryIO, Callable, Iterable

import numpy as np

MAGIC = b"GPTH"
_HEADER = struct.Struct("<4sIQdd")


class DegeneratePathError(ValueError):
    pass


@dataclass(frozen=True)
class TimeGrid:
    """``n`` equal intervals covering ``[t0, t1]``."""

    t0: float
    t1: float
    n: int

    def __post_init__(self):
        if not self.t1 > self.t0:
            raise ValueError(f"need t1 > t0, got [{self.t0}, {self.t1}]")
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"n must be a positive integer, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.t1 - self.t0) / self.n

    @property
    def points(self) -> np.ndarray:
        k = np.arange(self.n + 1)
        pts = self.t0 + k * (self.t1 - self.t0) / self.n
        pts[-1] = self.t1
        return pts

    def __len__(self) -> int:
        return self.n + 1

    def index(self, t: float, tol: float = 1e-9) -> int:
        """Grid index of time ``t``; raises if ``t`` is not a grid point."""
        k = round((t - self.t0) / self.h)
        if k < 0 or k > self.n or abs(self.t0 + k * self.h - t) > tol * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a point of {self}")
        return int(k)

    def sub(self, k0: int, k1: int) -> "TimeGrid":
        """Grid restricted to indices ``k0..k1``."""
        pts = self.points
        return TimeGrid(float(pts[k0]), float(pts[k1]), k1 - k0)

    def coarsen(self, stride: int) -> "TimeGrid":
        if self.n % stride:
            raise ValueError("stride must divide n")
        return TimeGrid(self.t0, self.t1, self.n // stride)

    def is_dyadic(self) -> bool:
        return self.n & (self.n - 1) == 0


@dataclass(frozen=True)
class GridPath:
    """A d-dimensional path on a ``TimeGrid``; ``values`` has shape (n+1, d)."""

    grid: TimeGrid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2 or v.shape[0] != len(self.grid):
            raise ValueError(f"values of shape {v.shape} do not fit a grid with {len(self.grid)} points")
        if not np.all(np.isfinite(v)):
            raise ValueError("path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def dims(self) -> int:
        return self.values.shape[1]

    @property
    def times(self) -> np.ndarray:
        return self.grid.points

    def component(self, i: int = 0) -> np.ndarray:
        return self.values[:, i]

    def increments(self) -> np.ndarray:
        return np.diff(self.values, axis=0)

    def shifted(self, c) -> "GridPath":
        return GridPath(self.grid, self.values + np.asarray(c, dtype=float))

    def restrict(self, k0: int, k1: int) -> "GridPath":
        return GridPath(self.grid.sub(k0, k1), self.values[k0 : k1 + 1])

    @classmethod
    def from_function(cls, grid: TimeGrid, fn: Callable[[np.ndarray], np.ndarray]) -> "GridPath":
        return cls(grid, fn(grid.points))

    # --- serialization -------------------------------------------------
    def to_csv(self, fh) -> None:
        close = False
        if isinstance(fh, (str, Path)):
            fh, close = open(fh, "w", newline=""), True
        try:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"x_{i + 1}" for i in range(self.dims)])
            for t, row in zip(self.times, self.values):
                w.writerow([repr(float(t))] + [repr(float(v)) for v in row])
        finally:
            if close:
                fh.close()

    @classmethod
    def from_csv(cls, fh) -> "GridPath":
        if isinstance(fh, (str, Path)):
            text = Path(fh).read_text()
        else:
            text = fh.read()
        rows = list(csv.reader(io.StringIO(text)))
        data = np.array([[float(v) for v in r] for r in rows[1:]])
        t = data[:, 0]
        return cls(TimeGrid(float(t[0]), float(t[-1]), len(t) - 1), data[:, 1:])

    def to_bytes(self) -> bytes:
        head = _HEADER.pack(MAGIC, self.dims, self.grid.n, self.grid.t0, self.grid.t1)
        return head + self.values.astype("<f8").tobytes()

    @classmethod
    def read_from(cls, fh: BinaryIO) -> "GridPath":
        raw = fh.read(_HEADER.size)
        if len(raw) < _HEADER.size:
            raise EOFError
        magic, dims, n, t0, t1 = _HEADER.unpack(raw)
        if magic != MAGIC:
            raise ValueError("not a GridPath record")
        body = fh.read(8 * dims * (n + 1))
        vals = np.frombuffer(body, dtype="<f8").reshape(n + 1, dims)
        return cls(TimeGrid(t0, t1, n), vals.astype(float))

    @classmethod
    def from_bytes(cls, data: bytes) -> "GridPath":
        return cls.read_from(io.BytesIO(data))


def write_paths(path: str | Path, paths: Iterable[GridPath]) -> None:
    with open(path, "wb") as fh:
        for p in paths:
            fh.write(p.to_bytes())


def read_paths(path: str | Path) -> list[GridPath]:
    out = []
    with open(path, "rb") as fh:
        while True:
            try:
                out.append(GridPath.read_from(fh))
            except EOFError:
                return out


@dataclass(frozen=True)
class NormReport:
    value: float
    attaining_pair: tuple[int, int]

    def __float__(self) -> float:
        return self.value


# --- pair scans ------------------------------------------------------------

def _as_batch(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    return v


def pair_scan(values: np.ndarray, h: float, exponent: float, stride: int = 1):
    """``max_{s<t} |x_t - x_s| / |t-s|^exponent`` over all grid pairs.

    ``values`` has shape (..., n+1, d). Returns ``(value, s_index, t_index)``,
    each of batch shape, indices referring to the original grid.
    """
    x = _as_batch(values)
    if x.shape[-2] < 2:
        raise DegeneratePathError("degenerate path")
    if stride > 1:
        x = x[..., ::stride, :]
        h = h * stride
    n = x.shape[-2] - 1
    batch = x.shape[:-2]
    best = np.full(batch, -1.0)
    s_best = np.zeros(batch, dtype=int)
    lag_best = np.ones(batch, dtype=int)
    scalar = x.shape[-1] == 1
    for k in range(1, n + 1):
        d = x[..., k:, :] - x[..., :-k, :]
        mag = np.abs(d[..., 0]) if scalar else np.sqrt(np.sum(d * d, axis=-1))
        ratio = mag / (k * h) ** exponent
        pos = np.argmax(ratio, axis=-1)
        val = np.take_along_axis(ratio, pos[..., None], axis=-1)[..., 0]
        upd = val > best
        best = np.where(upd, val, best)
        s_best = np.where(upd, pos, s_best)
        lag_best = np.where(upd, k, lag_best)
    return best, s_best * stride, (s_best + lag_best) * stride


def holder_seminorm(path: GridPath, alpha: float, stride: int = 1) -> NormReport:
    """Homogeneous Hölder semi-norm ``sup |x_t - x_s| / |t-s|^alpha``."""
    if not 0 < alpha < 1:
        raise ValueError("alpha must lie in (0, 1)")
    if len(path.grid) < 2:
        raise DegeneratePathError("degenerate path")
    v, s, t = pair_scan(path.values, path.grid.h, alpha, stride)
    return NormReport(float(v), (int(s), int(t)))


def holder_seminorms(values: np.ndarray, h: float, alpha: float, stride: int = 1) -> np.ndarray:
    """Batched semi-norms for arrays of shape (batch, n+1[, d])."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[..., None]
    return pair_scan(v, h, alpha, stride)[0]


def holder_norms(values: np.ndarray, h: float, alpha: float, stride: int = 1) -> np.ndarray:
    """Inhomogeneous norm ``|x|_inf + |x|_alpha`` for batches of paths."""
    v = np.asarray(values, dtype=float)
    if v.ndim == 2:
        v = v[..., None]
    sup = np.max(np.sqrt(np.sum(v * v, axis=-1)), axis=-1)
    return sup + pair_scan(v, h, alpha, stride)[0]


def lp_holder_norm(values: np.ndarray, h: float, alpha: float, p: float, stride: int = 1) -> float:
    """``sup_{s<t} ||x_t - x_s||_p / |t-s|^alpha`` over an ensemble.

    ``values`` has shape (n_paths, n+1[, d]); the L^p norm is the empirical
    one over the first axis.
    """
    x = np.asarray(values, dtype=float)
    if x.ndim == 2:
        x = x[..., None]
    x = x[:, ::stride]
    h = h * stride
    n = x.shape[1] - 1
    best = 0.0
    for k in range(1, n + 1):
        d = x[:, k:] - x[:, :-k]
        mag = np.sqrt(np.sum(d * d, axis=-1))
        lp = np.mean(mag**p, axis=0) ** (1.0 / p)
        best = max(best, float(lp.max()) / (k * h) ** alpha)
    return best


def primitive(values: np.ndarray, h: float) -> np.ndarray:
    """Trapezoidal primitive along the last axis, starting at zero."""
    v = np.asarray(values, dtype=float)
    mids = 0.5 * (v[..., 1:] + v[..., :-1]) * h
    return np.concatenate([np.zeros(v.shape[:-1] + (1,)), np.cumsum(mids, axis=-1)], axis=-1)


def neg_holder_norm(integrand: GridPath, kappa: float, stride: int = 1) -> NormReport:
    """Negative Hölder norm ``sup |t-s|^(kappa-1) |int_s^t h|``.

    The primitive is built with the trapezoidal rule on the grid.
    """
    if integrand.dims != 1:
        raise ValueError("integrand must be scalar")
    if not 0 < kappa < 1:
        raise ValueError("kappa must lie in (0, 1)")
    prim = primitive(integrand.values[:, 0], integrand.grid.h)
    v, s, t = pair_scan(prim, integrand.grid.h, 1.0 - kappa, stride)
    return NormReport(float(v), (int(s), int(t)))


def neg_holder_norms(values: np.ndarray, h: float, kappa: float, stride: int = 1) -> np.ndarray:
    """Batched negative Hölder norms of scalar integrands (batch, n+1)."""
    prim = primitive(values, h)
    return pair_scan(prim[..., None], h, 1.0 - kappa, stride)[0]


def neg_holder_xdep_norm(f, xs, grid: TimeGrid, kappa: float, gamma: float, stride: int = 1) -> NormReport:
    """Lower bound for the norm of ``f(t, x)`` in C^{-kappa, gamma}.

    ``f`` is either a callable ``f(t_array, x) -> array`` or a precomputed
    array of shape (len(xs), n+1). The supremum over x is replaced by the
    finite sample ``xs``, so the result can only underestimate the norm.
    """
    xs = np.asarray(xs, dtype=float)
    if xs.ndim == 1:
        xs = xs[:, None]
    if len(xs) == 0:
        raise ValueError("empty x-sample set")
    if len(xs) < 2:
        raise ValueError("need at least two x samples")
    if callable(f):
        t = grid.points
        vals = np.stack([np.broadcast_to(np.asarray(f(t, x), dtype=float), t.shape) for x in xs])
    else:
        vals = np.asarray(f, dtype=float)
    prim = primitive(vals, grid.h)
    v1, s1, t1 = pair_scan(prim[..., None], grid.h, 1.0 - kappa, stride)
    i = int(np.argmax(v1))
    best, pair = float(v1[i]), (int(s1[i]), int(t1[i]))
    ia, ib = np.triu_indices(len(xs), k=1)
    dist = np.sqrt(np.sum((xs[ia] - xs[ib]) ** 2, axis=-1))
    v2, s2, t2 = pair_scan((prim[ia] - prim[ib])[..., None], grid.h, 1.0 - kappa, stride)
    v2 = v2 / dist**gamma
    j = int(np.argmax(v2))
    if v2[j] > best:
        best, pair = float(v2[j]), (int(s2[j]), int(t2[j]))
    return NormReport(best, pair)


def osc_lip_norms(values, spacing: float | None = None, periodic: bool = True) -> tuple[float, float]:
    """Oscillation ``max - min`` and the largest adjacent difference quotient.

    With ``periodic`` the samples are taken to cover the circle uniformly
    (spacing ``2*pi/len``) and the wrap-around pair is included.
    """
    v = np.asarray(values, dtype=float).ravel()
    if v.size < 2:
        raise DegeneratePathError("need at least two samples")
    if spacing is None:
        if not periodic:
            raise ValueError("spacing required for non-periodic samples")
        spacing = 2 * np.pi / v.size
    d = np.diff(np.append(v, v[0]) if periodic else v)
    return float(v.max() - v.min()), float(np.max(np.abs(d)) / spacing)


def circle_distance(a, b):
    """Geodesic distance on the unit circle, always in ``[0, pi]``."""
    d = np.mod(np.asarray(a) - np.asarray(b), 2 * np.pi)
    return np.minimum(d, 2 * np.pi - d)
