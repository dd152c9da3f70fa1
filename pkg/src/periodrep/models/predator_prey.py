"""Predator-prey model with Holling type II predation.

    x' = p1 x (1 - x/p2) - p3 z x / (p4 + x)
    z' = p5 z x / (p4 + x) - p6 z

With ``q = x + (p3/p5) z`` the predator is replaced by a variable that obeys
a linear equation driven by the measured prey ``x``:

    q' = -p6 q + p1 x (1 - x/p2) + p6 x
    x' = p1 x - (p1/p2) x^2 + p5 x^2/(p4 + x) - p5 x/(p4 + x) q

so ``p3`` drops out and the reduced problem has five nonlinear parameters
``(p1, p2, p4, p5, p6)`` and no linear ones.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numba
import numpy as np

from ..canonical import AdmissibleBox, CanonicalSystem, QSubsystem
from ..errors import DomainError, SimulationError
from ..integrators import integrate_fixed
from ..signal import SampledSignal, UniformGrid

PARAM_NAMES = ("p1", "p2", "p4", "p5", "p6")


@dataclass(frozen=True)
class PredatorPreyParams:
    p1: float = 1.0
    p2: float = 1.3
    p3: float = 1.0
    p4: float = 1.0
    p5: float = 3.0
    p6: float = 0.1

    def validate(self, reduced: bool = False):
        if self.p2 == 0:
            raise DomainError("carrying capacity must be non-zero", "p2")
        if not reduced and self.p3 == 0:
            raise DomainError("predation scale must be non-zero for the reduction", "p3")
        if self.p5 == 0:
            raise DomainError("conversion scale must be non-zero", "p5")
        if self.p6 == 0:
            raise DomainError("predator mortality must be non-zero", "p6")
        return self

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))

    @property
    def reduced(self) -> np.ndarray:
        """Nonlinear parameters of the reduced model, ``(p1, p2, p4, p5, p6)``."""
        return np.array([self.p1, self.p2, self.p4, self.p5, self.p6])


TRUE_PARAMS = PredatorPreyParams()
TRUE_LAMBDA = TRUE_PARAMS.reduced
INITIAL_CONDITION = (0.0053, 0.2536)
PERIOD = 34.05
START_LAMBDA = np.array([0.3, 0.3, 0.3, 1.5, 0.01])
# reference Nelder-Mead estimates from START_LAMBDA, kept for comparison
REPORTED_LAMBDA = np.array([0.9999, 1.3018, 0.9991, 2.9966, 0.1])
BOX = AdmissibleBox(lower=np.array([0.05, 0.05, 0.05, 0.1, 0.005]),
                    upper=np.array([5.0, 5.0, 5.0, 10.0, 1.0]))


@numba.njit
def _rhs(t, s, p):
    x, z = s[0], s[1]
    sat = x / (p[3] + x)
    out = np.empty(2)
    out[0] = p[0] * x * (1.0 - x / p[1]) - p[2] * z * sat
    out[1] = p[4] * z * sat - p[5] * z
    return out


def rhs(params: PredatorPreyParams, x, z):
    """Right-hand side of the original two-species model (vectorized)."""
    p1, p2, p3, p4, p5, p6 = astuple(params)
    sat = x / (p4 + x)
    return p1 * x * (1 - x / p2) - p3 * z * sat, p5 * z * sat - p6 * z


def simulate_pp(params: PredatorPreyParams = TRUE_PARAMS, x0: float = INITIAL_CONDITION[0],
                z0: float = INITIAL_CONDITION[1], dt: float = 0.001, t_end: float = PERIOD,
                method: str = "rk4") -> tuple[SampledSignal, SampledSignal]:
    """Fixed-step simulation; returns prey and predator on ``[0, t_end]``.

    The returned signals are raw records (no periodicity check).
    """
    if x0 < 0 or z0 < 0:
        raise SimulationError(f"initial condition ({x0}, {z0}) is outside the positive quadrant")
    n_steps = int(round(t_end / dt))
    states = integrate_fixed(_rhs, params.as_array(), np.array([x0, z0]), dt, n_steps, method)
    low = states.min(axis=0)
    if np.any(low < -1e-6):
        bad = int(np.argmax((states < -1e-6).any(axis=1)))
        raise SimulationError("population density went negative", bad)
    grid = UniformGrid(0.0, dt, n_steps + 1)
    span = grid.span
    return (SampledSignal(grid, states[:, 0], span, None),
            SampledSignal(grid, states[:, 1], span, None))


def _alpha(y, lam, t):
    return np.full((np.size(y), 1), -lam[4])


def _w(y, lam, t):
    p1, p2, _, _, p6 = lam
    return (p1 * y * (1 - y / p2) + p6 * y)[:, None]


def _g(y, lam, t, q):
    p1, p2, p4, p5, _ = lam
    den = p4 + y
    if np.any(den == 0):
        raise DomainError("p4 + x vanishes", "p4", int(np.argmax(den == 0)))
    return (p1 * y - (p1 / p2) * y**2 + p5 * y**2 / den - p5 * y / den * q[:, 0])[:, None]


def _checked(fn):
    def wrapped(y, lam, t, *rest):
        if lam[1] == 0:
            raise DomainError("carrying capacity must be non-zero", "p2")
        if lam[3] == 0:
            raise DomainError("conversion scale must be non-zero", "p5")
        if lam[4] == 0:
            raise DomainError("predator mortality must be non-zero", "p6")
        return fn(y, lam, t, *rest)
    return wrapped


def predator_prey_system() -> CanonicalSystem:
    """Reduced form: ``n = 1``, ``r = 0``, ``lambda = (p1, p2, p4, p5, p6)``."""
    return CanonicalSystem(
        name="predator_prey", n=1, r=0, k_lambda=5,
        g=_checked(_g),
        q_subsystem=QSubsystem(1, _checked(_alpha), _checked(_w)),
        param_names=PARAM_NAMES, box=BOX)


def transformed_q(params: PredatorPreyParams, x, z):
    """``q = x + (p3/p5) z``."""
    return np.asarray(x) + params.p3 / params.p5 * np.asarray(z)


def q_rhs(params: PredatorPreyParams, x, q):
    """Right-hand side of the q equation in transformed coordinates."""
    return params.p1 * x * (1 - x / params.p2) + params.p6 * x - params.p6 * q


def pp_dataset(dt: float = 0.001, method: str = "rk4", period: float = PERIOD,
               params: PredatorPreyParams = TRUE_PARAMS) -> tuple[SampledSignal, SampledSignal]:
    """Prey and predator over one period from the reference initial condition."""
    x, z = simulate_pp(params, dt=dt, t_end=period, method=method)
    return (SampledSignal(x.grid, x.values, period), SampledSignal(z.grid, z.values, period))


def direct_output(lam, x0: float, q0: float, dt: float, n_steps: int, method: str = "euler",
                  p3: float = TRUE_PARAMS.p3) -> np.ndarray:
    """Prey trajectory by direct time stepping of the two-species model.

    The predator starts from ``z0 = (q0 - x0) p5 / p3``.
    """
    p1, p2, p4, p5, p6 = np.asarray(lam, float)
    params = PredatorPreyParams(p1, p2, p3, p4, p5, p6).validate()
    z0 = (q0 - x0) * p5 / p3
    states = integrate_fixed(_rhs, params.as_array(), np.array([x0, z0]), dt, n_steps, method)
    return states[:, 0]
