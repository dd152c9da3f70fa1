"""Uniformly sampled periodic signals."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DataError, GridError, ParseError

# relative jitter tolerated in the spacing of loaded sample times
GRID_JITTER = 1e-6


@dataclass(frozen=True)
class UniformGrid:
    t0: float
    dt: float
    n_points: int

    def __post_init__(self):
        if not self.dt > 0:
            raise GridError(f"grid step must be positive, got {self.dt}")
        if self.n_points < 2:
            raise GridError(f"grid needs at least 2 points, got {self.n_points}")

    @property
    def times(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.n_points)

    @property
    def span(self) -> float:
        return (self.n_points - 1) * self.dt


@dataclass(frozen=True)
class SampledSignal:
    """A scalar trajectory sampled over one period on a uniform grid.

    ``periodic_rtol`` bounds ``|values[0] - values[-1]|`` relative to the
    signal range; pass ``None`` for raw simulator output that is not yet
    trimmed to a period.
    """

    grid: UniformGrid
    values: np.ndarray
    period_T: float
    periodic_rtol: float | None = field(default=1e-2, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if values.shape != (self.grid.n_points,):
            raise GridError(
                f"expected {self.grid.n_points} values, got shape {values.shape}"
            )
        if not self.period_T > 0:
            raise GridError(f"period must be positive, got {self.period_T}")
        if abs(self.period_T - self.grid.span) > self.grid.dt * (1 + 1e-9):
            raise GridError(
                f"grid spans {self.grid.span}, which is not one period {self.period_T} "
                f"to within one step"
            )
        if self.periodic_rtol is not None:
            scale = float(np.ptp(values)) or 1.0
            gap = abs(values[0] - values[-1])
            if gap > self.periodic_rtol * scale:
                raise DataError(
                    f"signal is not periodic: |y[0] - y[-1]| = {gap:.3g} exceeds "
                    f"{self.periodic_rtol} of the range {scale:.3g}"
                )

    @classmethod
    def from_values(cls, values, dt: float, t0: float = 0.0, period_T: float | None = None,
                    periodic_rtol: float | None = 1e-2) -> "SampledSignal":
        values = np.asarray(values, dtype=float)
        grid = UniformGrid(t0, dt, len(values))
        if period_T is None:
            period_T = grid.span
        return cls(grid, values, period_T, periodic_rtol)

    @property
    def t(self) -> np.ndarray:
        return self.grid.times

    @property
    def dt(self) -> float:
        return self.grid.dt

    def __len__(self) -> int:
        return self.grid.n_points

    def __call__(self, t):
        return eval_periodic(self, t)

    def shifted(self, m: int) -> "SampledSignal":
        """Re-wrap the period so it starts at grid index ``m``.

        Requires the grid to span exactly one period; the closing sample is
        set equal to the new first sample.
        """
        n = self.grid.n_points
        core = self.values[:-1]
        m %= n - 1
        rolled = np.concatenate([core[m:], core[:m]])
        rolled = np.append(rolled, rolled[0])
        grid = UniformGrid(self.grid.t0 + m * self.grid.dt, self.grid.dt, n)
        return SampledSignal(grid, rolled, self.period_T, self.periodic_rtol)


def eval_periodic(s: SampledSignal, t):
    """Linear interpolation of the periodically extended signal.

    Times are wrapped into ``[t0, t0 + T)``; the closing grid sample is the
    start of the next period. Accepts scalars or arrays.
    """
    scalar = np.ndim(t) == 0
    t = np.atleast_1d(np.asarray(t, dtype=float))
    T = s.period_T
    dt = s.grid.dt
    n = s.grid.n_points
    v = s.values

    phase = np.fmod(t - s.grid.t0, T)
    phase = np.where(phase < 0, phase + T, phase)
    u = phase / dt
    # snap to grid points so samples are reproduced exactly
    r = np.rint(u)
    u = np.where(np.abs(u - r) <= 1e-9 * np.maximum(1.0, r), r, u)
    k = np.floor(u).astype(np.int64)
    frac = u - k

    # knots 0..n-1 plus, when T exceeds the grid span, a closing knot at T
    # carrying values[0]
    last = n - 1
    k = np.minimum(k, last)
    right = np.where(k + 1 <= last, v[np.minimum(k + 1, last)], v[0])
    left = v[k]
    width = np.where(k == last, (T - last * dt) / dt, 1.0)
    frac = np.where(k == last, np.divide(frac, width, out=np.zeros_like(frac), where=width > 0), frac)
    frac = np.clip(frac, 0.0, 1.0)
    out = np.where(frac == 0.0, left, left + frac * (right - left))
    return float(out[0]) if scalar else out


def _parse_float(token: str, line: int) -> float:
    try:
        return float(token)
    except ValueError:
        raise ParseError(f"not a number: {token!r}", line) from None


def load_csv(path, period_T: float | None = None, periodic_rtol: float | None = 1e-2) -> SampledSignal:
    """Read a two-column ``t,y`` CSV into a :class:`SampledSignal`.

    The step is the median spacing; the period defaults to the grid span.
    """
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc

    ts: list[float] = []
    ys: list[float] = []
    for lineno, row in enumerate(csv.reader(text.splitlines()), start=1):
        if not row or all(not c.strip() for c in row):
            continue
        if lineno == 1 and not ts:
            head = row[0].strip()
            try:
                float(head)
            except ValueError:
                continue  # header line
        if len(row) < 2:
            raise ParseError(f"expected 2 columns, got {len(row)}", lineno)
        ts.append(_parse_float(row[0].strip(), lineno))
        ys.append(_parse_float(row[1].strip(), lineno))

    if len(ts) < 2:
        raise GridError(f"{path}: need at least 2 samples, got {len(ts)}")
    t = np.asarray(ts)
    steps = np.diff(t)
    if np.any(steps <= 0):
        bad = int(np.argmax(steps <= 0))
        raise GridError(f"{path}: times not strictly increasing at row {bad + 2}")
    dt = float(np.median(steps))
    jitter = np.abs(steps - dt) / dt
    if np.any(jitter > GRID_JITTER):
        bad = int(np.argmax(jitter > GRID_JITTER))
        raise GridError(
            f"{path}: non-uniform spacing at row {bad + 2} "
            f"(step {steps[bad]!r} vs median {dt!r})"
        )
    grid = UniformGrid(float(t[0]), dt, len(t))
    return SampledSignal(grid, np.asarray(ys), grid.span if period_T is None else period_T,
                         periodic_rtol)


def save_csv(path, t, columns: dict[str, np.ndarray]) -> None:
    """Write ``t`` plus named columns with 17 significant digits."""
    path = Path(path)
    names = ["t", *columns]
    data = np.column_stack([np.asarray(t, dtype=float),
                            *(np.asarray(c, dtype=float) for c in columns.values())])
    with path.open("w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(names) + "\n")
        for row in data:
            fh.write(",".join(format(x, ".17g") for x in row) + "\n")
