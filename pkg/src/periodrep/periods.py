"""Period detection and trimming of simulated trajectories to one period."""

from __future__ import annotations

import numpy as np

from .errors import DataError
from .signal import SampledSignal, UniformGrid


def upward_crossings(values, dt: float, level: float, t0: float = 0.0) -> np.ndarray:
    """Times where ``values`` crosses ``level`` upward, linearly interpolated."""
    v = np.asarray(values, float)
    i = np.flatnonzero((v[:-1] < level) & (v[1:] >= level))
    frac = (level - v[i]) / (v[i + 1] - v[i])
    return t0 + (i + frac) * dt


def mean_crossing_period(values, dt: float, t0: float = 0.0, min_cycles: int = 2) -> tuple[float, np.ndarray]:
    """Period from successive positive-slope crossings of the signal mean.

    Uses the crossings of the second half of the record (after transients)
    and returns the mean spacing of the last ``min_cycles`` cycles together
    with all crossing times.
    """
    v = np.asarray(values, float)
    level = float(np.mean(v[v.size // 2:]))
    times = upward_crossings(v, dt, level, t0)
    if times.size < min_cycles + 1:
        raise DataError(
            f"found {times.size} upward mean crossings; need {min_cycles + 1} "
            "(trajectory not periodic within t_end - use a longer burn-in)")
    periods = np.diff(times[-(min_cycles + 1):])
    if np.ptp(periods) > 1e-3 * np.mean(periods):
        raise DataError(
            f"cycle lengths {periods} disagree; trajectory has not settled on a periodic orbit")
    return float(np.mean(periods)), times


def return_period(values, dt: float, tol: float = 1e-2, t0: float = 0.0) -> float:
    """First time the signal comes back to its starting value on an upward crossing.

    The signal must first move away from the start by more than ``tol``
    relative to its range.
    """
    v = np.asarray(values, float)
    scale = float(np.ptp(v)) or 1.0
    away = np.flatnonzero(np.abs(v - v[0]) > tol * scale)
    if away.size == 0:
        raise DataError("signal never leaves its starting value")
    start = away[0]
    times = upward_crossings(v[start:], dt, v[0], t0 + start * dt)
    if times.size == 0:
        raise DataError("signal does not return to its starting value")
    return float(times[0] - t0)


def one_period(values, dt: float, start: int, period: float, t0: float = 0.0,
               periodic_rtol: float | None = 1e-2) -> SampledSignal:
    """Cut ``round(period/dt) + 1`` samples from index ``start``."""
    n = int(round(period / dt)) + 1
    v = np.asarray(values, float)
    if start + n > v.size:
        raise DataError(f"need {n} samples from index {start}, trajectory has {v.size}")
    grid = UniformGrid(t0, dt, n)
    return SampledSignal(grid, v[start:start + n].copy(), period, periodic_rtol)
