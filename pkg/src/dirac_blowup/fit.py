"""Power-law fits of profile amplitudes near y = 1."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import linregress

MIN_SAMPLES = 8


class InsufficientData(ValueError):
    pass


class NonpositiveValue(ValueError):
    pass


@dataclass(frozen=True)
class PowerLawFit:
    slope: float
    intercept: float
    r_squared: float
    n: int

    def __iter__(self):
        yield self.slope
        yield self.intercept
        yield self.r_squared


def fit_power_law(samples, window: tuple[float, float]) -> PowerLawFit:
    """Least-squares line through ``(log(1 - y), log value)`` for ``y`` in ``window``.

    ``samples`` is a sequence of ``(y, value)`` pairs or a two-column array.
    The slope is the exponent ``gamma`` in ``value ~ (1 - y)^gamma``.
    """
    arr = np.asarray(samples, dtype=float).reshape(-1, 2)
    lo, hi = window
    y, value = arr[:, 0], arr[:, 1]
    mask = (y >= lo) & (y <= hi)
    if mask.sum() < MIN_SAMPLES:
        raise InsufficientData(f"{mask.sum()} samples in window {window}, need {MIN_SAMPLES}")
    if np.any(value[mask] <= 0):
        raise NonpositiveValue("power-law fit needs positive values")
    if np.any(y[mask] >= 1.0):
        raise InsufficientData("window must stay below y = 1")
    lx = np.log1p(-y[mask])
    ly = np.log(value[mask])
    if np.ptp(ly) == 0.0:
        return PowerLawFit(0.0, float(ly[0]), 1.0, int(mask.sum()))
    res = linregress(lx, ly)
    return PowerLawFit(float(res.slope), float(res.intercept), float(res.rvalue**2), int(mask.sum()))
