"""Integral representation of a periodic output through observer error dynamics.

For a reduced-form model the stacked error ``xi = (x_hat - x, theta_hat - theta)``
of the adaptive observer obeys the linear time-varying system

    xi' = M(t) xi,   M = [[A0 + l C^T, b phi^T], [-phi C^T, 0]]

whose fundamental matrix ``Phi`` depends on the measured ``y`` only. Given
``Phi``, the model output for any nonlinear parameter vector is

    y_hat(t) = C^T Phi(t) (R + int_{t0}^{t} Phi(tau)^{-1} v(tau) dtau),
    v = (g - l y, y phi),
    R = (I - Phi(T))^{-1} Phi(T) int_{t0}^{t0+T} Phi(tau)^{-1} v dtau,

and at the true parameters ``R`` is the stacked initial state and linear
parameters. ``Phi`` and its LU factors are built once per dataset.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .canonical import CanonicalSystem, g_on_grid
from .errors import IntegrationBlowUp, NumericError, RepresentationUnavailable
from .integrators import chain_products, get_tableau, linear_step_matrices
from .linalg import lu_factor_batched, lu_solve_batched
from .quadrature import TRAPEZOID, cumulative
from .signal import SampledSignal, UniformGrid

DEFAULT_STEP = 0.0002
COND_WARN = 1e12


def shift_matrix(n: int) -> np.ndarray:
    """``A0``: ones on the superdiagonal."""
    return np.eye(n, k=1)


@dataclass(frozen=True)
class ObserverGains:
    l: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        l = np.atleast_1d(np.asarray(self.l, float))
        b = np.atleast_1d(np.asarray(self.b, float))
        object.__setattr__(self, "l", l)
        object.__setattr__(self, "b", b)
        n = l.size
        if b.size != n:
            raise ValueError(f"l and b must have the same length, got {n} and {b.size}")
        if b[0] != 1.0:
            raise ValueError(f"b[0] must be 1, got {b[0]}")
        if n > 1:
            roots = np.roots(b)
            if np.any(roots.real >= 0):
                raise ValueError(f"filter polynomial with coefficients {b} is not Hurwitz")
        eig = np.linalg.eigvals(self.injection_matrix)
        if np.any(eig.real >= 0):
            raise ValueError(f"A0 + l C^T is not Hurwitz for l = {l} (eigenvalues {eig})")

    @property
    def n(self) -> int:
        return self.l.size

    @property
    def injection_matrix(self) -> np.ndarray:
        a = shift_matrix(self.n)
        a[:, 0] += self.l
        return a

    @classmethod
    def default(cls, n: int = 1) -> "ObserverGains":
        if n != 1:
            raise ValueError("default gains exist only for n = 1; supply l and b")
        return cls(np.array([-1.0]), np.array([1.0]))


def error_dynamics_matrix(sys: CanonicalSystem, gains: ObserverGains, y, t) -> np.ndarray:
    """System matrix of the error dynamics; stacked over ``y``/``t`` if they are arrays."""
    scalar = np.ndim(y) == 0
    y = np.atleast_1d(np.asarray(y, float))
    t = np.broadcast_to(np.asarray(t, float), y.shape)
    n, r = sys.n, sys.r
    if gains.n != n:
        raise ValueError(f"gains have dimension {gains.n}, system has n = {n}")
    m = n + r
    out = np.zeros(y.shape + (m, m))
    out[..., :n, :n] = gains.injection_matrix
    if r:
        phi = np.asarray(sys.phi(y.ravel(), t.ravel()), float).reshape(y.shape + (r,))
        out[..., :n, n:] = gains.b[:, None] * phi[..., None, :]
        out[..., n:, 0] = -phi
    return out[0] if scalar else out


@dataclass(frozen=True)
class FundamentalMatrix:
    grid: UniformGrid
    Phi: np.ndarray
    method: str
    h: float
    lu: tuple[np.ndarray, np.ndarray]

    @property
    def Phi_period(self) -> np.ndarray:
        return self.Phi[-1]

    @property
    def size(self) -> int:
        return self.Phi.shape[1]

    def solve(self, v: np.ndarray) -> np.ndarray:
        """``Phi(t_i, t0)^{-1} v[i]`` for every grid point."""
        return lu_solve_batched(self.lu, v)

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.Phi_period))))


def _propagate(sys, gains, y: SampledSignal, t_start: float, n_steps: int, h: float,
               method: str, every: int) -> np.ndarray:
    tab = get_tableau(method)
    ts = t_start + h * (np.arange(n_steps)[:, None] + tab.c[None, :])
    M = error_dynamics_matrix(sys, gains, y(ts), ts)
    S = linear_step_matrices(M, h, tab)
    P = chain_products(S, every)
    if not np.all(np.isfinite(P)):
        bad = int(np.argmax(~np.isfinite(P).all(axis=(1, 2))))
        raise IntegrationBlowUp("fundamental matrix integration blew up", bad)
    return P


def _substeps(dt: float, h: float) -> int:
    k = dt / h
    kr = int(round(k))
    if kr < 1 or abs(k - kr) > 1e-9 * max(1.0, k):
        raise ValueError(f"step {h} must divide the grid spacing {dt}")
    return kr


def compute_fundamental_matrix(sys: CanonicalSystem, gains: ObserverGains, y: SampledSignal,
                               method: str = "dopri_fixed", h: float | None = None) -> FundamentalMatrix:
    """Integrate the error dynamics from the identity over one period.

    ``Phi`` is sampled at every signal grid point; the internal step ``h``
    must divide the grid spacing (default ``min(dt, 0.0002)`` rounded to a
    divisor).
    """
    dt = y.grid.dt
    if h is None:
        h = dt / int(np.ceil(dt / DEFAULT_STEP - 1e-9))
    k = _substeps(dt, h)
    n_steps = (y.grid.n_points - 1) * k
    Phi = _propagate(sys, gains, y, y.grid.t0, n_steps, dt / k, method, k)
    try:
        factors = lu_factor_batched(Phi)
    except np.linalg.LinAlgError as exc:
        raise RepresentationUnavailable(f"singular fundamental matrix: {exc}") from exc
    if Phi.shape[1] > 1:
        cond = np.linalg.cond(Phi[:: max(1, len(Phi) // 2000)])
        if np.max(cond) > COND_WARN:
            warnings.warn(f"fundamental matrix condition number reaches {np.max(cond):.3g}",
                          RuntimeWarning, stacklevel=2)
    return FundamentalMatrix(y.grid, Phi, method, dt / k, factors)


def transition_matrix(sys: CanonicalSystem, gains: ObserverGains, y: SampledSignal,
                      t_start: float, t_end: float, method: str = "dopri_fixed",
                      h: float = DEFAULT_STEP) -> np.ndarray:
    """``Phi(t_end, t_start)`` integrated afresh from the identity at ``t_start``."""
    n_steps = int(round((t_end - t_start) / h))
    if n_steps < 0 or abs(n_steps * h - (t_end - t_start)) > 1e-9 * max(1.0, abs(t_end)):
        raise ValueError("t_end - t_start must be a non-negative multiple of h")
    if n_steps == 0:
        return np.eye(sys.n + sys.r)
    return _propagate(sys, gains, y, t_start, n_steps, h, method, n_steps)[-1]


def pe_check(sys: CanonicalSystem, y: SampledSignal, delta_min: float = 1e-8) -> tuple[float, bool]:
    """Smallest eigenvalue of the one-period Gram matrix of ``phi``."""
    if sys.r == 0:
        return float("inf"), True
    phi = sys.phi_on_grid(y)
    gram = cumulative(phi[:, :, None] * phi[:, None, :], y.dt, TRAPEZOID)[-1]
    lam_min = float(np.linalg.eigvalsh(gram)[0])
    return lam_min, lam_min > delta_min


def forcing(sys: CanonicalSystem, gains: ObserverGains, y: SampledSignal, lam,
            rule: str = TRAPEZOID, workers: int = 1) -> np.ndarray:
    """Stacked forcing ``(g - l y, y phi)`` on the grid, shape ``(N, n + r)``."""
    g = g_on_grid(sys, y, lam, rule, workers)
    top = g - y.values[:, None] * gains.l[None, :]
    if sys.r == 0:
        return top
    return np.concatenate([top, y.values[:, None] * sys.phi_on_grid(y)], axis=1)


def forcing_integral(sys, gains, Phi: FundamentalMatrix, y: SampledSignal, lam,
                     rule: str = TRAPEZOID, workers: int = 1) -> np.ndarray:
    """Running integral of ``Phi(tau)^{-1} v(tau)``, shape ``(N, n + r)``."""
    v = Phi.solve(forcing(sys, gains, y, lam, rule, workers))
    return cumulative(v, y.dt, rule, workers)


def _R_from_total(Phi: FundamentalMatrix, total: np.ndarray) -> np.ndarray:
    PT = Phi.Phi_period
    lhs = np.eye(PT.shape[0]) - PT
    smin = np.linalg.svd(lhs, compute_uv=False)[-1]
    if smin < 1e-10:
        raise RepresentationUnavailable(
            f"I - Phi(t0+T, t0) is singular (smallest singular value {smin:.3g}); "
            "the error dynamics are not exponentially stable over the period")
    return np.linalg.solve(lhs, PT @ total)


def compute_R(sys: CanonicalSystem, gains: ObserverGains, Phi: FundamentalMatrix,
              y: SampledSignal, lam, rule: str = TRAPEZOID, workers: int = 1) -> np.ndarray:
    return _R_from_total(Phi, forcing_integral(sys, gains, Phi, y, lam, rule, workers)[-1])


@dataclass(frozen=True)
class Prediction:
    yhat: np.ndarray
    R: np.ndarray
    cumulative: np.ndarray

    def periodic_residual(self, Phi: FundamentalMatrix) -> float:
        """``|Phi(T)(R + C(T)) - R|``; zero for an exactly periodic solution."""
        return float(np.linalg.norm(Phi.Phi_period @ (self.R + self.cumulative[-1]) - self.R))


def predict(sys, gains, Phi: FundamentalMatrix, y: SampledSignal, lam, rule: str = TRAPEZOID,
            workers: int = 1, indices=None) -> Prediction:
    """``y_hat`` on the grid (or at ``indices``) together with ``R`` and the running integral.

    Raises :class:`NumericError` if the representation overflows.
    """
    with np.errstate(over="ignore", invalid="ignore"):
        C = forcing_integral(sys, gains, Phi, y, lam, rule, workers)
        if not np.all(np.isfinite(C[-1])):
            bad = int(np.argmax(~np.isfinite(C).all(axis=1)))
            raise NumericError("running integral of the representation is not finite", bad)
        R = _R_from_total(Phi, C[-1])
        idx = slice(None) if indices is None else indices
        yhat = np.einsum("ij,ij->i", Phi.Phi[idx, 0, :], R[None, :] + C[idx])
    if not np.all(np.isfinite(yhat)):
        raise NumericError("representation output is not finite", int(np.argmax(~np.isfinite(yhat))))
    return Prediction(yhat, R, C)


def predict_yhat(sys: CanonicalSystem, gains: ObserverGains, Phi: FundamentalMatrix,
                 y: SampledSignal, lam, rule: str = TRAPEZOID, workers: int = 1) -> np.ndarray:
    return predict(sys, gains, Phi, y, lam, rule, workers).yhat


def recover_x0_theta(R, n: int = 1) -> tuple[np.ndarray, np.ndarray]:
    R = np.asarray(R, float)
    if R.size < n:
        raise ValueError(f"R has {R.size} entries, fewer than n = {n}")
    return R[:n].copy(), R[n:].copy()
