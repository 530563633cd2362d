"""Regression and Monte Carlo summary helpers shared by the checks."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import stats as _st
from scipy.special import lambertw


@dataclass(frozen=True)
class PowerFit:
    """Least-squares fit of ``log y = log C + slope * log x``."""

    slope: float
    prefactor: float
    r2: float
    slope_ci: tuple[float, float]
    n: int

    def predict(self, x):
        return self.prefactor * np.asarray(x, dtype=float) ** self.slope

    def to_dict(self) -> dict:
        d = asdict(self)
        d["slope_ci"] = list(self.slope_ci)
        return d


def loglog_fit(x, y, level: float = 0.95) -> PowerFit:
    """Fit a power law through positive data on log-log axes.

    The slope interval is the usual Student-t interval of ordinary least
    squares; with two points it degenerates to the point estimate.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.size < 2:
        raise ValueError("need at least two paired points")
    if np.any(x <= 0) or np.any(y <= 0):
        raise ValueError("log-log fit needs positive data")
    lx, ly = np.log(x), np.log(y)
    res = _st.linregress(lx, ly)
    n = x.size
    r2 = float(res.rvalue**2) if np.isfinite(res.rvalue) else 1.0
    if n > 2:
        q = _st.t.ppf(0.5 + level / 2, n - 2)
        ci = (float(res.slope - q * res.stderr), float(res.slope + q * res.stderr))
    else:
        ci = (float(res.slope), float(res.slope))
    return PowerFit(float(res.slope), float(np.exp(res.intercept)), r2, ci, n)


def lp_norm(samples, p: float, axis: int = 0):
    """Empirical ``(E|X|^p)^(1/p)`` along ``axis``."""
    a = np.abs(np.asarray(samples, dtype=float))
    return np.mean(a**p, axis=axis) ** (1.0 / p)


def lp_norm_band(samples, p: float, axis: int = 0):
    """L^p norm with a delta-method standard error."""
    a = np.abs(np.asarray(samples, dtype=float)) ** p
    n = a.shape[axis]
    m = a.mean(axis=axis)
    se_m = a.std(axis=axis, ddof=1) / np.sqrt(n)
    norm = m ** (1.0 / p)
    with np.errstate(divide="ignore", invalid="ignore"):
        se = np.where(m > 0, norm * se_m / (p * m), 0.0)
    return norm, se


def mean_band(samples, axis: int = 0):
    a = np.asarray(samples, dtype=float)
    return a.mean(axis=axis), a.std(axis=axis, ddof=1) / np.sqrt(a.shape[axis])


def bootstrap_slope(x, samples, p: float, n_boot: int = 1000, seed: int = 0, level: float = 0.95):
    """Percentile bootstrap interval for the log-log slope of L^p norms.

    ``samples`` has shape ``(n_mc, len(x))``; replicas are resampled jointly
    so that correlation across the parameter grid (shared noise) is kept.
    """
    samples = np.asarray(samples, dtype=float)
    rng = np.random.default_rng(seed)
    n = samples.shape[0]
    lx = np.log(np.asarray(x, dtype=float))
    slopes = np.empty(n_boot)
    for b in range(n_boot):
        idx = rng.integers(0, n, n)
        ly = np.log(lp_norm(samples[idx], p, axis=0))
        slopes[b] = np.polyfit(lx, ly, 1)[0]
    lo, hi = np.quantile(slopes, [(1 - level) / 2, (1 + level) / 2])
    return float(lo), float(hi)


def fit_exp_constant(ratio, spread) -> float:
    """Smallest C with ``ratio_i <= C exp(C spread_i)`` for every i.

    Solved member-wise through the Lambert W function.
    """
    ratio = np.asarray(ratio, dtype=float)
    spread = np.asarray(spread, dtype=float)
    cs = []
    for r, s in zip(ratio, spread):
        if r <= 0:
            cs.append(0.0)
        elif s <= 0:
            cs.append(r)
        else:
            cs.append(float(lambertw(s * r).real) / s)
    return max(cs)
