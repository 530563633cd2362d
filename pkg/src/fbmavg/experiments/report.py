"""Convergence reports, per-point result caching and the replica work queue."""
from __future__ import annotations

import csv
import hashlib
import json
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .. import __version__
from ..stats import bootstrap_slope, loglog_fit, lp_norm_band
from .config import config_hash, to_mapping

Z95 = 1.959963984540054


@dataclass
class ConvergenceReport:
    """L^p errors over a parameter grid with a fitted power-law rate.

    ``kappa`` is the decay rate: ``mean_err ~ param^-kappa`` for a speed
    parameter such as ``n``, and ``mean_err ~ param^kappa`` for a scale
    parameter such as ``eps`` (``decreasing_param``).
    """

    name: str
    param_name: str
    params: list[float]
    p: float
    mean_err: list[float]
    se: list[float]
    fit: dict | None
    kappa: float | None
    kappa_ci: tuple[float, float] | None
    decreasing_param: bool = False
    checks: dict[str, bool] = field(default_factory=dict)
    extras: dict[str, Any] = field(default_factory=dict)
    manifest: dict[str, Any] = field(default_factory=dict)
    run_info: dict[str, Any] = field(default_factory=dict)  # not serialised (e.g. resumed points)

    @property
    def band_lo(self) -> list[float]:
        return [max(0.0, m - Z95 * s) for m, s in zip(self.mean_err, self.se)]

    @property
    def band_hi(self) -> list[float]:
        return [m + Z95 * s for m, s in zip(self.mean_err, self.se)]

    @property
    def passed(self) -> bool:
        return all(self.checks.values())

    def to_dict(self) -> dict:
        return {
            "name": self.name, "param_name": self.param_name, "params": self.params, "p": self.p,
            "mean_err": self.mean_err, "se": self.se, "band_lo": self.band_lo, "band_hi": self.band_hi,
            "fit": self.fit, "kappa": self.kappa,
            "kappa_ci": None if self.kappa_ci is None else list(self.kappa_ci),
            "decreasing_param": self.decreasing_param, "checks": self.checks, "passed": self.passed,
            "extras": self.extras, "manifest": self.manifest,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=1)

    def summary(self) -> str:
        lines = [f"{self.name}: {self.param_name} = {self.params}"]
        for x, m, lo, hi in zip(self.params, self.mean_err, self.band_lo, self.band_hi):
            lines.append(f"  {self.param_name}={x:<8g} err={m:.4g}  [{lo:.4g}, {hi:.4g}]")
        if self.kappa is not None:
            ci = "" if self.kappa_ci is None else f"  95% CI [{self.kappa_ci[0]:.3f}, {self.kappa_ci[1]:.3f}]"
            r2 = "" if self.fit is None else f"  R2={self.fit['r2']:.3f}"
            lines.append(f"  rate kappa={self.kappa:.3f}{ci}{r2}")
        for name, ok in self.checks.items():
            lines.append(f"  {'PASS' if ok else 'FAIL'} {name}")
        return "\n".join(lines)

    def write(self, out_dir: str | Path, stem: str = "report") -> list[Path]:
        """Write ``stem.json``, the flat ``stem.csv`` table and gnuplot ``stem.dat``."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = [out / f"{stem}.json", out / f"{stem}.csv", out / f"{stem}.dat"]
        paths[0].write_text(self.to_json() + "\n")
        with open(paths[1], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["param", "p", "mean_err", "band_lo", "band_hi"])
            for row in zip(self.params, [self.p] * len(self.params), self.mean_err, self.band_lo, self.band_hi):
                w.writerow([repr(float(v)) for v in row])
        with open(paths[2], "w") as fh:
            fh.write(f"# {self.param_name} mean_err\n")
            for x, m in zip(self.params, self.mean_err):
                fh.write(f"{float(x)!r} {float(m)!r}\n")
        return paths

    @classmethod
    def read(cls, path: str | Path) -> "ConvergenceReport":
        d = json.loads(Path(path).read_text())
        return cls(d["name"], d["param_name"], d["params"], d["p"], d["mean_err"], d["se"], d["fit"], d["kappa"],
                   None if d["kappa_ci"] is None else tuple(d["kappa_ci"]), d["decreasing_param"], d["checks"],
                   d["extras"], d["manifest"])


def build_report(name: str, param_name: str, params: Sequence[float], samples: np.ndarray, p: float,
                 decreasing_param: bool, seed: int, n_boot: int = 1000, fit_mask=None) -> ConvergenceReport:
    """Summarise per-replica errors ``samples`` of shape (n_mc, len(params)).

    The rate is fitted on log-log axes; its interval is a paired bootstrap
    over replicas, which keeps the correlation induced by shared drivers.
    """
    samples = np.asarray(samples, dtype=float)
    norm, se = lp_norm_band(samples, p, axis=0)
    params = [float(x) for x in params]
    mask = np.ones(len(params), bool) if fit_mask is None else np.asarray(fit_mask, bool)
    fit = kappa = ci = None
    if mask.sum() >= 2 and np.all(norm[mask] > 0):
        x = np.asarray(params)[mask]
        pf = loglog_fit(x, norm[mask])
        lo, hi = bootstrap_slope(x, samples[:, mask], p, n_boot=n_boot, seed=seed)
        sign = 1.0 if decreasing_param else -1.0
        kappa = sign * pf.slope
        ci = tuple(sorted((sign * lo, sign * hi)))
        fit = pf.to_dict()
    return ConvergenceReport(name, param_name, params, float(p), [float(v) for v in norm], [float(v) for v in se],
                             fit, kappa, ci, decreasing_param)


def monotone_within_bands(mean_err: Sequence[float], se: Sequence[float], k: float = 2.0) -> bool:
    """Each error is no larger than its predecessor plus ``k`` combined standard errors."""
    m, s = np.asarray(mean_err), np.asarray(se)
    return bool(np.all(m[1:] <= m[:-1] + k * np.sqrt(s[1:] ** 2 + s[:-1] ** 2)))


def digest(*arrays: np.ndarray) -> str:
    h = hashlib.sha256()
    for a in arrays:
        h.update(np.ascontiguousarray(a, dtype=float).tobytes())
    return h.hexdigest()


# --- work queue ---------------------------------------------------------------------

def chunk_ranges(n_mc: int, chunk: int) -> list[tuple[int, int]]:
    """Replica blocks; the layout depends on the configuration only, never on the worker count."""
    return [(a, min(a + chunk, n_mc)) for a in range(0, n_mc, chunk)]


def map_chunks(fn: Callable, tasks: Sequence[tuple], jobs: int = 1) -> list:
    """Apply ``fn(*task)`` to every task, in a process pool when ``jobs > 1``; order is kept."""
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(*t) for t in tasks]
    with ProcessPoolExecutor(max_workers=min(jobs, len(tasks))) as pool:
        return list(pool.map(fn, *zip(*tasks)))


class PointCache:
    """Per-parameter-point results on disk, keyed by the configuration hash."""

    def __init__(self, root: str | Path, cfg):
        self.root = Path(root) / "points"
        self.key = config_hash(cfg)

    def _file(self, i: int) -> Path:
        return self.root / f"{self.key[:16]}_{i:03d}.npz"

    def load(self, i: int) -> dict | None:
        f = self._file(i)
        if not f.exists():
            return None
        with np.load(f) as z:
            return {k: z[k] for k in z.files}

    def save(self, i: int, arrays: dict) -> None:
        self.root.mkdir(parents=True, exist_ok=True)
        tmp = self._file(i).with_suffix(".tmp.npz")
        np.savez(tmp, **arrays)
        os.replace(tmp, self._file(i))


def gather_points(compute_chunk: Callable, cfg, n_points: int, jobs: int = 1, cache: PointCache | None = None):
    """Run ``compute_chunk(cfg_dict, start, stop, todo)`` over replica blocks.

    Each call returns ``{"hash": str, "points": {i: {name: array}}}``.
    Cached points are skipped; arrays of fresh points are concatenated over
    blocks in replica order and stored. Returns ``(points, hashes, resumed)``.
    """
    cached = {i: cache.load(i) for i in range(n_points)} if cache is not None else {}
    resumed = sorted(i for i, v in cached.items() if v is not None)
    todo = [i for i in range(n_points) if i not in resumed]
    blocks = chunk_ranges(cfg.n_mc, cfg.chunk)
    cfg_d = to_mapping(cfg)
    results = map_chunks(compute_chunk, [(cfg_d, a, b, tuple(todo)) for a, b in blocks], jobs)
    points = {}
    for i in range(n_points):
        if i in resumed:
            points[i] = cached[i]
            continue
        keys = results[0]["points"][i].keys()
        points[i] = {k: np.concatenate([r["points"][i][k] for r in results]) for k in keys}
        if cache is not None:
            cache.save(i, points[i])
    driver = hashlib.sha256("".join(r["hash"] for r in results).encode()).hexdigest()
    return points, driver, resumed


def manifest(cfg, seed: int, **extra) -> dict:
    """Configuration, seed and version; everything needed to rerun bit for bit."""
    m = {"config": to_mapping(cfg), "config_hash": config_hash(cfg), "seed": int(seed), "version": __version__}
    m.update(extra)
    return m
