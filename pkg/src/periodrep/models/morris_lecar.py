"""Morris-Lecar voltage oscillator.

    x' = gCa m_inf(x)(x + ECa) + gK q (x + EK) + gL (x + EL) + I
    q' = (w_inf(x) - q) / tau(x)

    m_inf = (1 + tanh((x - V1)/V2)) / 2
    w_inf = (1 + tanh((x + V3)/V4)) / 2
    tau   = T0 / cosh((x + V3)/(2 V4))

Sign conventions are kept as written above (``ECa = -100``, ``EK = 70``,
``EL = 50``, negative conductances). The leak and the applied current enter
linearly, ``gL (x + EL) + I = phi(x)^T theta`` with ``phi = (x, 1)`` and
``theta = (gL, I + EL gL)``, so ``I = theta_2 - EL theta_1``.
"""

from __future__ import annotations

from dataclasses import astuple, dataclass

import numba
import numpy as np

from ..canonical import AdmissibleBox, CanonicalSystem, QSubsystem
from ..errors import DataError, DomainError
from ..integrators import integrate_fixed
from ..periods import mean_crossing_period, one_period
from ..signal import SampledSignal, UniformGrid

E_CA = -100.0
E_K = 70.0
E_L = 50.0

PARAM_NAMES = ("V1", "V2", "V3", "V4", "T0", "gCa", "gK")
SEARCH_NAMES = ("V1/V2", "1/V2", "V3", "V4", "T0", "gCa", "gK")


@dataclass(frozen=True)
class MorrisLecarParams:
    V1: float = -1.0
    V2: float = 15.0
    V3: float = -10.0
    V4: float = 14.5
    T0: float = 3.0
    gCa: float = -1.1
    gK: float = -2.0
    gL: float = -0.5
    I: float = 10.0

    def validate(self):
        check_lambda(self.nonlinear)
        return self

    def as_array(self) -> np.ndarray:
        return np.array(astuple(self))

    @property
    def nonlinear(self) -> np.ndarray:
        return self.as_array()[:7]

    @property
    def theta(self) -> np.ndarray:
        return np.array([self.gL, self.I + E_L * self.gL])


TRUE_PARAMS = MorrisLecarParams()
TRUE_LAMBDA = TRUE_PARAMS.nonlinear
# estimates reported alongside the true values
REPORTED_LAMBDA = np.array([-0.95, 15.08, -10.15, 14.44, 3.04, -1.12, -2.02])
REPORTED_THETA = np.array([-0.539, 10.65])
ADJUST_THETA2 = -0.07

BOX = AdmissibleBox(lower=np.array([-10.0, 5.0, -30.0, 5.0, 0.5, -3.0, -5.0]),
                    upper=np.array([10.0, 40.0, 10.0, 40.0, 10.0, -0.2, -0.5]))


def check_lambda(lam):
    V2, V4, T0 = lam[1], lam[3], lam[4]
    if V2 == 0:
        raise DomainError("m_inf slope must be non-zero", "V2")
    if V4 == 0:
        raise DomainError("w_inf slope must be non-zero", "V4")
    if not T0 > 0:
        raise DomainError("time-constant scale must be positive", "T0")


def m_inf(x, V1, V2):
    return 0.5 * (1 + np.tanh((x - V1) / V2))


def w_inf(x, V3, V4):
    return 0.5 * (1 + np.tanh((x + V3) / V4))


def tau(x, V3, V4, T0):
    return T0 / np.cosh((x + V3) / (2 * V4))


def linear_block(theta) -> tuple[float, float]:
    """``(gL, I)`` from the linear parameters ``theta = (gL, I + EL gL)``."""
    theta = np.asarray(theta, float)
    return float(theta[0]), float(theta[1] - E_L * theta[0])


def rhs(params: MorrisLecarParams, x, q):
    V1, V2, V3, V4, T0, gCa, gK, gL, I = astuple(params)
    dx = gCa * m_inf(x, V1, V2) * (x + E_CA) + gK * q * (x + E_K) + gL * (x + E_L) + I
    dq = (w_inf(x, V3, V4) - q) / tau(x, V3, V4, T0)
    return dx, dq


@numba.njit
def _rhs(t, s, p):
    x, q = s[0], s[1]
    m = 0.5 * (1.0 + np.tanh((x - p[0]) / p[1]))
    w = 0.5 * (1.0 + np.tanh((x + p[2]) / p[3]))
    ta = p[4] / np.cosh((x + p[2]) / (2.0 * p[3]))
    out = np.empty(2)
    out[0] = p[5] * m * (x - 100.0) + p[6] * q * (x + 70.0) + p[7] * (x + 50.0) + p[8]
    out[1] = (w - q) / ta
    return out


def simulate_ml(params: MorrisLecarParams = TRUE_PARAMS, x0: float = -20.0, q0: float = 0.1,
                dt: float = 0.0002, t_end: float = 100.0, method: str = "rk4",
                keep_every: int = 1) -> tuple[SampledSignal, SampledSignal]:
    """Fixed-step simulation; returns voltage and recovery variable on ``[0, t_end]``."""
    params.validate()
    n_steps = int(round(t_end / dt))
    if n_steps % keep_every:
        raise ValueError("keep_every must divide the number of steps")
    states = integrate_fixed(_rhs, params.as_array(), np.array([x0, q0]), dt, n_steps, method,
                             keep_every)
    grid = UniformGrid(0.0, dt * keep_every, states.shape[0])
    return (SampledSignal(grid, states[:, 0], grid.span, None),
            SampledSignal(grid, states[:, 1], grid.span, None))


def _phi(y, t):
    y = np.asarray(y, float)
    return np.stack([y, np.ones_like(y)], axis=-1)


def _alpha(y, lam, t):
    check_lambda(lam)
    return (-1.0 / tau(y, lam[2], lam[3], lam[4]))[:, None]


def _w(y, lam, t):
    check_lambda(lam)
    return (w_inf(y, lam[2], lam[3]) / tau(y, lam[2], lam[3], lam[4]))[:, None]


def _g(y, lam, t, q):
    check_lambda(lam)
    V1, V2, _, _, _, gCa, gK = lam
    return (gCa * m_inf(y, V1, V2) * (y + E_CA) + gK * q[:, 0] * (y + E_K))[:, None]


def morris_lecar_system() -> CanonicalSystem:
    """Reduced form: ``n = 1``, ``r = 2``, ``phi = (y, 1)``, ``lambda = (V1..gK)``."""
    return CanonicalSystem(
        name="morris_lecar", n=1, r=2, k_lambda=7, g=_g, phi=_phi,
        q_subsystem=QSubsystem(1, _alpha, _w), param_names=PARAM_NAMES, box=BOX)


@dataclass(frozen=True)
class RatioParametrization:
    """Search over ``(V1/V2, 1/V2, V3, V4, T0, gCa, gK)`` instead of ``(V1, V2, ...)``."""

    names: tuple = SEARCH_NAMES

    @staticmethod
    def to_search(lam) -> np.ndarray:
        lam = np.asarray(lam, float)
        out = lam.copy()
        out[..., 0] = lam[..., 0] / lam[..., 1]
        out[..., 1] = 1.0 / lam[..., 1]
        return out

    @staticmethod
    def from_search(s) -> np.ndarray:
        s = np.asarray(s, float)
        out = s.copy()
        out[..., 1] = 1.0 / s[..., 1]
        out[..., 0] = s[..., 0] / s[..., 1]
        return out

    def search_box(self, box: AdmissibleBox = BOX) -> AdmissibleBox:
        # V1/V2 over V1 in [lo, hi], V2 in [a, b] with a > 0
        v1lo, v2lo = box.lower[0], box.lower[1]
        v1hi, v2hi = box.upper[0], box.upper[1]
        ratios = [v1lo / v2lo, v1lo / v2hi, v1hi / v2lo, v1hi / v2hi]
        lo = box.lower.copy()
        hi = box.upper.copy()
        lo[0], hi[0] = min(ratios), max(ratios)
        lo[1], hi[1] = 1.0 / v2hi, 1.0 / v2lo
        return AdmissibleBox(lo, hi)


@dataclass(frozen=True)
class MLDataset:
    y: SampledSignal
    q: SampledSignal
    period: float
    start_time: float


def ml_dataset(params: MorrisLecarParams = TRUE_PARAMS, dt: float = 0.0002, burn_in: float = 100.0,
               method: str = "rk4", x0: float = -20.0, q0: float = 0.1,
               extra: float = 60.0) -> MLDataset:
    """One settled period of voltage (and recovery variable) from a burn-in run.

    The period is measured from positive-slope crossings of the mean voltage
    and the record starts at the first grid point after such a crossing.
    """
    x, q = simulate_ml(params, x0, q0, dt=dt, t_end=burn_in + extra, method=method)
    period, crossings = mean_crossing_period(x.values, dt)
    after = crossings[crossings >= burn_in]
    if after.size == 0:
        raise DataError("no mean crossing after the burn-in; increase the simulated length")
    start = int(np.ceil(after[0] / dt))
    return MLDataset(one_period(x.values, dt, start, period),
                     one_period(q.values, dt, start, period),
                     period, start * dt)


def direct_output(lam, x0: float, q0: float, dt: float, n_steps: int, method: str = "euler",
                  gL: float = TRUE_PARAMS.gL, I: float = TRUE_PARAMS.I) -> np.ndarray:
    """Voltage trajectory by direct time stepping with the given linear block."""
    params = MorrisLecarParams(*np.asarray(lam, float), gL, I).validate()
    states = integrate_fixed(_rhs, params.as_array(), np.array([x0, q0]), dt, n_steps, method)
    return states[:, 0]
