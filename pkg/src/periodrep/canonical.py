"""Reduced-form models and closed-form elimination of the q-subsystem.

A model in reduced form is

    x' = A0 x + b phi(y, t)^T theta + g(y, lambda, t, q)
    q' = diag(alpha(y, lambda, t)) q + w(y, lambda, t),    y = x[0]

with ``theta`` entering linearly and ``lambda`` nonlinearly. Because ``y``
is measured, ``q`` is a known linear functional of ``y`` once ``q(t0)`` is
fixed, and periodicity fixes ``q(t0)``.

All callables are vectorized over the time grid: ``y`` and ``t`` arrive as
arrays of shape ``(N,)``; ``phi`` returns ``(N, r)``, ``g`` returns
``(N, n)`` given ``q`` of shape ``(N, d)``, ``alpha`` and ``w`` return
``(N, d)``. They must be pure.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, NumericError, SingularPeriodError, StabilityError
from .quadrature import TRAPEZOID, cumulative, exp_kernel_cumulative
from .signal import SampledSignal


@dataclass(frozen=True)
class QSubsystem:
    d: int
    alpha: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]
    w: Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class AdmissibleBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, float)
        hi = np.asarray(self.upper, float)
        if lo.shape != hi.shape or np.any(lo >= hi):
            raise ValueError("box needs lower < upper componentwise")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    def contains(self, lam) -> bool:
        lam = np.asarray(lam, float)
        return bool(np.all(lam >= self.lower) and np.all(lam <= self.upper))

    def distance(self, lam) -> float:
        lam = np.asarray(lam, float)
        return float(np.linalg.norm(np.maximum(self.lower - lam, 0) + np.maximum(lam - self.upper, 0)))

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(n, self.lower.size))


def _no_phi(y, t):
    return np.zeros((np.size(y), 0))


@dataclass(frozen=True)
class CanonicalSystem:
    name: str
    n: int
    r: int
    k_lambda: int
    g: Callable[..., np.ndarray]
    phi: Callable[[np.ndarray, np.ndarray], np.ndarray] = _no_phi
    q_subsystem: QSubsystem | None = None
    param_names: Sequence[str] = field(default=())
    box: AdmissibleBox | None = None

    def check_lambda(self, lam) -> np.ndarray:
        lam = np.asarray(lam, dtype=float)
        if lam.shape != (self.k_lambda,):
            raise ValueError(f"{self.name}: expected {self.k_lambda} parameters, got shape {lam.shape}")
        if not np.all(np.isfinite(lam)):
            raise DomainError(f"{self.name}: non-finite parameter vector {lam}")
        return lam

    def phi_on_grid(self, y: SampledSignal) -> np.ndarray:
        out = np.asarray(self.phi(y.values, y.t), dtype=float).reshape(len(y), self.r)
        return out


def _first_bad(a: np.ndarray) -> int:
    bad = ~np.isfinite(a)
    if a.ndim > 1:
        bad = bad.reshape(a.shape[0], -1).any(axis=1)
    return int(np.argmax(bad))


@dataclass(frozen=True)
class QSolution:
    """Pieces of the closed-form q solution on the grid."""

    A: np.ndarray       # (N, d) running integral of alpha
    forced: np.ndarray  # (N, d) response from q(t0) = 0

    def trajectory(self, q0) -> np.ndarray:
        with np.errstate(over="ignore"):
            q = np.exp(self.A) * np.asarray(q0, float) + self.forced
        if not np.all(np.isfinite(q)):
            raise NumericError("q trajectory overflowed", _first_bad(q))
        return q

    def periodic_q0(self) -> np.ndarray:
        decay = self.A[-1]
        gap = -np.expm1(decay)
        if np.any(np.abs(gap) < 1e-12):
            i = int(np.argmin(np.abs(gap)))
            raise SingularPeriodError(
                f"q component {i} is not contracting over one period "
                f"(integral of alpha = {decay[i]:.3g})")
        if np.any(decay >= 0):
            i = int(np.argmax(decay >= 0))
            raise StabilityError(
                f"q component {i} has non-negative integral of alpha over the period "
                f"({decay[i]:.3g}); its periodic solution is unstable")
        return self.forced[-1] / gap


def q_solution(sys: CanonicalSystem, y: SampledSignal, lam, rule: str = TRAPEZOID,
               workers: int = 1) -> QSolution:
    qs = sys.q_subsystem
    if qs is None:
        raise ValueError(f"{sys.name} has no q-subsystem")
    lam = sys.check_lambda(lam)
    t = y.t
    with np.errstate(all="ignore"):
        alpha = np.asarray(qs.alpha(y.values, lam, t), float).reshape(len(y), qs.d)
        w = np.asarray(qs.w(y.values, lam, t), float).reshape(len(y), qs.d)
    for name, arr in (("alpha", alpha), ("w", w)):
        if not np.all(np.isfinite(arr)):
            raise DomainError(f"{sys.name}: non-finite {name}", index=_first_bad(arr))
    A = np.empty_like(alpha)
    forced = np.empty_like(w)
    for i in range(qs.d):
        A[:, i] = cumulative(alpha[:, i], y.dt, rule, workers)
        forced[:, i] = exp_kernel_cumulative(alpha[:, i], w[:, i], y.dt, rule, workers)
    return QSolution(A, forced)


def q0_periodic(sys: CanonicalSystem, y: SampledSignal, lam, rule: str = TRAPEZOID,
                workers: int = 1) -> np.ndarray:
    """Initial value of the unique T-periodic q driven by the measured ``y``.

    Per component: ``q0 = (1 - e^{A(T)})^{-1} int_{t0}^{t0+T} e^{A(T)-A(tau)} w dtau``.
    """
    return q_solution(sys, y, lam, rule, workers).periodic_q0()


def q_trajectory(sys: CanonicalSystem, y: SampledSignal, lam, q0=None, rule: str = TRAPEZOID,
                 workers: int = 1) -> np.ndarray:
    """q on the signal grid, shape ``(N, d)``; periodic ``q0`` when not given."""
    sol = q_solution(sys, y, lam, rule, workers)
    return sol.trajectory(sol.periodic_q0() if q0 is None else q0)


def g_on_grid(sys: CanonicalSystem, y: SampledSignal, lam, rule: str = TRAPEZOID,
              workers: int = 1) -> np.ndarray:
    """The nonlinear term ``g`` at every grid point, shape ``(N, n)``."""
    lam = sys.check_lambda(lam)
    if sys.q_subsystem is not None:
        q = q_trajectory(sys, y, lam, rule=rule, workers=workers)
    else:
        q = np.zeros((len(y), 0))
    with np.errstate(all="ignore"):
        g = np.asarray(sys.g(y.values, lam, y.t, q), float).reshape(len(y), sys.n)
    if not np.all(np.isfinite(g)):
        raise DomainError(f"{sys.name}: non-finite g", index=_first_bad(g))
    return g
