"""Exponent fits with local slopes for finite-size series."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

MODELS = ("power", "log-cubed", "stretched")


@dataclass(frozen=True)
class ExponentFit:
    model: str
    exponent: float
    intercept: float
    local: np.ndarray = field(repr=False)  # slope between consecutive points
    local_ratio: np.ndarray = field(repr=False)  # y/x per point (log-cubed, stretched)
    monotone: bool | None = None
    distances: np.ndarray | None = field(default=None, repr=False)


def _abscissa(model: str, L: np.ndarray, scale: float) -> np.ndarray:
    if model == "power":
        return np.log(L)
    if model == "log-cubed":
        return np.log(L) ** 3
    return np.sqrt(L / scale)


def fit_exponent(L, values, model: str = "power", log_values: bool = False, target: float | None = None,
                 scale: float = 1.0) -> ExponentFit:
    """Fit a finite-size series.

    power: log v against log L.  log-cubed: -log v against log^3 L.
    stretched: -log v against sqrt(L / scale).  With ``target`` set, the
    monotone flag says whether the local slopes (or, for log-cubed, the
    per-point ratios) get strictly closer to it along the series.
    """
    if model not in MODELS:
        raise ConfigError(f"model must be one of {MODELS}")
    L = np.asarray(L, dtype=float)
    y = np.asarray(values, dtype=float)
    if L.size < 3:
        raise ConfigError("need at least three points")
    if np.unique(L).size != L.size:
        raise ConfigError("degenerate abscissae")
    logv = y if log_values else np.log(y)
    x = _abscissa(model, L, scale)
    yy = logv if model == "power" else -logv
    slope, icept = np.polyfit(x, yy, 1)
    local = np.diff(yy) / np.diff(x)
    ratio = yy / x if model != "power" else np.full(L.size, math.nan)
    monotone = distances = None
    if target is not None:
        probe = ratio if model == "log-cubed" else local
        distances = np.abs(probe - target)
        monotone = bool(np.all(np.diff(distances) < 0))
    return ExponentFit(model, float(slope), float(icept), local, ratio, monotone, distances)
