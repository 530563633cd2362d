"""Named coefficients, so that configurations stay plain JSON.

A coefficient spec is either a name or ``{"name": ..., **params}``.  The
resolved :class:`Coefficient` is called as ``fn(x, y)`` with broadcastable
arrays of scalar slow states and fast states.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import i0, i1

from ..fast import FastSystem
from .config import ConfigError


@dataclass(frozen=True)
class Coefficient:
    fn: Callable[[np.ndarray, np.ndarray], np.ndarray]
    y_free: bool = False  # the coefficient ignores the fast variable
    is_zero: bool = False

    def __call__(self, x, y):
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return np.broadcast_to(np.asarray(self.fn(x, y), dtype=float), np.broadcast_shapes(x.shape, y.shape))


def bessel_ratio(strength: float = 1.0) -> float:
    """``I1(2s)/I0(2s)``, the mean of ``cos y`` under the von Mises law with concentration ``2s``."""
    return float(i1(2 * strength) / i0(2 * strength))


def _a(x, a0=0.5, a1=0.25):
    return a0 + a1 * np.cos(x)


def _zero(x, y, **_):
    return 0.0 * x + 0.0 * y


_COEFFICIENTS: dict[str, tuple[Callable, bool]] = {
    "zero": (lambda **p: _zero, True),
    "const": (lambda c=1.0: (lambda x, y: c + 0.0 * x), True),
    "damping": (lambda lam=1.0: (lambda x, y: -lam * x), True),
    "a": (lambda a0=0.5, a1=0.25: (lambda x, y: _a(x, a0, a1)), True),
    "cos_y": (lambda: (lambda x, y: np.cos(y) + 0.0 * x), False),
    "cos_y_a": (lambda a0=0.5, a1=0.25: (lambda x, y: np.cos(y) * _a(x, a0, a1)), False),
    "cos_y_centred": (lambda strength=1.0: (lambda x, y, r=bessel_ratio(strength): np.cos(y) - r + 0.0 * x),
                      False),
    "damped_cos_y": (lambda lam=1.0, c=1.0: (lambda x, y: -lam * x + c * np.cos(y)), False),
    "chain_sigma": (lambda sigma_bar=1.0, delta=0.5: (lambda x, y: sigma_bar + delta * (2 * y - 1) + 0.0 * x),
                    False),
    "chain_sigma_a": (lambda sigma_bar=1.0, delta=0.5, a0=0.5, a1=0.25:
                      (lambda x, y: (sigma_bar + delta * (2 * y - 1)) * _a(x, a0, a1)), False),
}


def _split(spec) -> tuple[str, dict]:
    if isinstance(spec, str):
        return spec, {}
    if isinstance(spec, dict) and "name" in spec:
        params = dict(spec)
        return params.pop("name"), params
    raise ConfigError(f"bad coefficient spec {spec!r}")


def coefficient(spec) -> Coefficient:
    name, params = _split(spec)
    if name not in _COEFFICIENTS:
        raise ConfigError(f"unknown coefficient {name!r}; known: {sorted(_COEFFICIENTS)}")
    factory, y_free = _COEFFICIENTS[name]
    try:
        return Coefficient(factory(**params), y_free, name == "zero")
    except TypeError as exc:
        raise ConfigError(f"coefficient {name!r}: {exc}") from exc


def fast_system(spec, eps: float) -> FastSystem:
    """``von_mises`` (``V0 = -s sin y``) or ``von_mises_coupled`` (``V0 = -s sin(y - x)``)."""
    name, params = _split(spec)
    unknown = set(params) - {"strength"}
    if unknown:
        raise ConfigError(f"fast system {name!r}: unknown parameters {sorted(unknown)}")
    if name == "von_mises":
        return FastSystem.von_mises(eps, **params)
    if name == "von_mises_coupled":
        return FastSystem.von_mises(eps, coupled=True, **params)
    raise ConfigError(f"unknown fast system {name!r}")


def known_coefficients() -> list[str]:
    return sorted(_COEFFICIENTS)
