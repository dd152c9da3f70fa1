"""Least-squares fitting of the nonlinear parameters.

The objective is the sum of squared differences between the integral
representation and the measured output at every ``stride``-th grid point.
Both optimizers work on a plain callable; :class:`Objective` adds the box
penalty, the optional search reparametrization and the forward model.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol

import numpy as np

from .canonical import AdmissibleBox, CanonicalSystem
from .errors import NumericError
from .observer import FundamentalMatrix, ObserverGains, predict, recover_x0_theta
from .quadrature import TRAPEZOID
from .signal import SampledSignal

PENALTY = 1e16


class Parametrization(Protocol):
    def to_search(self, lam) -> np.ndarray: ...
    def from_search(self, s) -> np.ndarray: ...


class Identity:
    names: tuple = ()

    @staticmethod
    def to_search(lam):
        return np.asarray(lam, float).copy()

    @staticmethod
    def from_search(s):
        return np.asarray(s, float).copy()


@dataclass
class Objective:
    """``f(s) = sum_i (y_hat(lambda(s), t_i) - y(t_i))^2`` over the subsampled grid.

    ``s`` lives in search coordinates (identity unless a parametrization is
    given); ``box`` is expressed in the same coordinates. Calling the
    objective never raises for bad parameters: points outside the box or
    where the model is undefined get ``PENALTY * (1 + distance)``.
    """

    system: CanonicalSystem
    gains: ObserverGains
    Phi: FundamentalMatrix
    signal: SampledSignal
    stride: int = 1
    rule: str = TRAPEZOID
    workers: int = 1
    parametrization: Parametrization = field(default_factory=Identity)
    box: AdmissibleBox | None = None
    n_evals: int = field(default=0, init=False)
    n_failures: int = field(default=0, init=False)

    def __post_init__(self):
        if self.stride < 1:
            raise ValueError(f"stride must be >= 1, got {self.stride}")
        self._idx = np.arange(0, len(self.signal), self.stride)
        self._y = self.signal.values[self._idx]

    @property
    def dim(self) -> int:
        return self.system.k_lambda

    @property
    def indices(self) -> np.ndarray:
        return self._idx

    def physical(self, s) -> np.ndarray:
        return self.parametrization.from_search(s)

    def residuals(self, s, workers: int | None = None) -> np.ndarray:
        lam = self.physical(s)
        pred = predict(self.system, self.gains, self.Phi, self.signal, lam, self.rule,
                       self.workers if workers is None else workers, self._idx)
        return pred.yhat - self._y

    def value(self, s, workers: int | None = None) -> float:
        """Unpenalized objective; raises on model errors."""
        r = self.residuals(s, workers)
        return float(r @ r)

    def evaluate(self, s, workers: int | None = None) -> tuple[float, bool]:
        """Penalized value and a flag telling whether the model was evaluated.

        Has no side effects, so it is safe to call from several threads.
        """
        s = np.asarray(s, float)
        if self.box is not None and not self.box.contains(s):
            return PENALTY * (1 + self.box.distance(s)), False
        try:
            with np.errstate(all="ignore"):
                f = self.value(s, workers)
        except (NumericError, ValueError, np.linalg.LinAlgError):
            return PENALTY, False
        if not math.isfinite(f):
            return PENALTY, False
        return f, True

    def penalized(self, s, workers: int | None = None) -> tuple[float, bool]:
        self.n_evals += 1
        f, ok = self.evaluate(s, workers)
        if not ok and (self.box is None or self.box.contains(np.asarray(s, float))):
            self.n_failures += 1
        return f, ok

    def __call__(self, s) -> float:
        return self.penalized(s)[0]

    def linear_estimates(self, s) -> tuple[np.ndarray, np.ndarray]:
        """``(x0, theta)`` recovered from ``R`` at the given parameters."""
        pred = predict(self.system, self.gains, self.Phi, self.signal, self.physical(s),
                       self.rule, self.workers, self._idx[:1])
        return recover_x0_theta(pred.R, self.system.n)


@dataclass
class FitResult:
    lambda_hat: np.ndarray
    search_hat: np.ndarray
    value: float
    x0_hat: np.ndarray
    theta_hat: np.ndarray
    objective_history: list
    lambda_history: np.ndarray
    iterations: int
    n_evals: int
    reason: str

    def to_dict(self) -> dict:
        return {
            "lambda_hat": self.lambda_hat.tolist(),
            "search_hat": self.search_hat.tolist(),
            "value": self.value,
            "x0_hat": self.x0_hat.tolist(),
            "theta_hat": self.theta_hat.tolist(),
            "iterations": self.iterations,
            "n_evals": self.n_evals,
            "reason": self.reason,
        }


@dataclass(frozen=True)
class NelderMeadConfig:
    reflection: float = 1.0
    expansion: float = 2.0
    contraction: float = 0.5
    shrink: float = 0.5
    initial_scale: float = 0.25   # relative offset of the initial vertices
    zero_scale: float = 0.00025   # absolute offset for zero coordinates
    max_iters: int = 20000
    max_evals: int = 40000
    f_tol: float = 1e-15
    x_tol: float = 1e-9
    f_target: float = 0.0
    restarts: int = 3             # fresh simplex around the best point after convergence
    restart_rtol: float = 1e-6    # stop restarting once the relative gain is below this

    def __post_init__(self):
        if not self.reflection > 0:
            raise ValueError("reflection must be > 0")
        if not self.expansion > 1:
            raise ValueError("expansion must be > 1")
        if not 0 < self.contraction < 1:
            raise ValueError("contraction must be in (0, 1)")
        if not 0 < self.shrink < 1:
            raise ValueError("shrink must be in (0, 1)")


@dataclass(frozen=True)
class BFGSConfig:
    max_iters: int = 2000
    fd_step: float = 1e-6
    fd_scheme: str = "forward"    # or "central"
    central_fallback: bool = True  # switch to central differences when the line search stalls
    armijo_c1: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 40
    first_step: float = 1e-2      # length of the first step relative to max(1, |x|)
    g_tol: float = 1e-10
    f_tol: float = 1e-15
    x_tol: float = 1e-12

    def __post_init__(self):
        if not self.fd_step > 0:
            raise ValueError("fd_step must be > 0")
        if self.fd_scheme not in ("forward", "central"):
            raise ValueError(f"unknown finite-difference scheme {self.fd_scheme!r}")


def _evaluator(func: Callable, workers: int):
    """Map ``func`` over points, optionally on a thread pool; order is preserved."""
    if workers <= 1:
        return lambda pts: [func(p) for p in pts], None
    pool = ThreadPoolExecutor(max_workers=workers)
    return lambda pts: list(pool.map(func, pts)), pool


def _finish(func, x, f, history, xs, it, n_evals, reason) -> FitResult:
    x = np.asarray(x, float)
    lam = x
    x0 = theta = np.empty(0)
    if isinstance(func, Objective):
        lam = func.physical(x)
        try:
            x0, theta = func.linear_estimates(x)
        except (NumericError, ValueError):
            pass
    return FitResult(lam, x, float(f), x0, theta, history, np.array(xs), it, n_evals, reason)


def nelder_mead(func: Callable, lambda0, cfg: NelderMeadConfig = NelderMeadConfig(),
                workers: int = 1, callback: Callable | None = None) -> FitResult:
    """Downhill simplex minimization.

    Vertices are ordered by value with ties kept in index order. Trial
    points that can be evaluated independently (initial simplex, shrink)
    are mapped over ``workers`` threads and merged by vertex index.
    A simplex that has collapsed away from the minimum is rebuilt around
    its best vertex up to ``cfg.restarts`` times.
    """
    res = _nelder_mead_run(func, lambda0, cfg, workers, callback)
    for _ in range(cfg.restarts):
        if res.reason not in ("converged",):
            break
        again = _nelder_mead_run(func, res.search_hat, cfg, workers, callback)
        gain = res.value - again.value
        hist = res.objective_history + again.objective_history[1:]
        xs = np.concatenate([res.lambda_history, again.lambda_history[1:]])
        res = FitResult(again.lambda_hat, again.search_hat, again.value, again.x0_hat,
                        again.theta_hat, hist, xs, res.iterations + again.iterations,
                        res.n_evals + again.n_evals, again.reason)
        if gain <= cfg.restart_rtol * abs(again.value):
            break
    return res


def _nelder_mead_run(func, lambda0, cfg, workers, callback) -> FitResult:
    x0 = np.asarray(lambda0, float)
    k = x0.size
    feval, pool = _evaluator(func, workers)
    n_evals = 0

    def f1(x):
        nonlocal n_evals
        n_evals += 1
        return func(x)

    try:
        f0 = f1(x0)
        history = [f0]
        xs = [x0.copy()]
        if f0 <= cfg.f_target:
            return _finish(func, x0, f0, history, xs, 0, n_evals, "f_target")

        simplex = np.tile(x0, (k + 1, 1))
        for i in range(k):
            simplex[i + 1, i] += cfg.initial_scale * x0[i] if x0[i] != 0 else cfg.zero_scale
        fvals = np.empty(k + 1)
        fvals[0] = f0
        fvals[1:] = feval(list(simplex[1:]))
        n_evals += k

        rho, chi, gamma, sigma = cfg.reflection, cfg.expansion, cfg.contraction, cfg.shrink
        it = 0
        reason = "max_iters"
        while True:
            order = np.argsort(fvals, kind="stable")
            simplex, fvals = simplex[order], fvals[order]
            if it:
                history.append(float(fvals[0]))
                xs.append(simplex[0].copy())
                if callback is not None:
                    callback(it, simplex[0], fvals[0])
            if fvals[0] <= cfg.f_target:
                reason = "f_target"
                break
            if (np.max(np.abs(fvals[1:] - fvals[0])) <= cfg.f_tol
                    and np.max(np.abs(simplex[1:] - simplex[0])) <= cfg.x_tol):
                reason = "converged"
                break
            if it >= cfg.max_iters:
                reason = "max_iters"
                break
            if n_evals >= cfg.max_evals:
                reason = "max_evals"
                break
            it += 1

            centroid = simplex[:-1].mean(axis=0)
            worst = simplex[-1]
            xr = centroid + rho * (centroid - worst)
            fr = f1(xr)
            if fr < fvals[0]:
                xe = centroid + rho * chi * (centroid - worst)
                fe = f1(xe)
                if fe < fr:
                    simplex[-1], fvals[-1] = xe, fe
                else:
                    simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-2]:
                simplex[-1], fvals[-1] = xr, fr
                continue
            if fr < fvals[-1]:
                xc = centroid + gamma * (xr - centroid)
                fc = f1(xc)
                if fc <= fr:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            else:
                xc = centroid + gamma * (worst - centroid)
                fc = f1(xc)
                if fc < fvals[-1]:
                    simplex[-1], fvals[-1] = xc, fc
                    continue
            simplex[1:] = simplex[0] + sigma * (simplex[1:] - simplex[0])
            fvals[1:] = feval(list(simplex[1:]))
            n_evals += k
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(func, simplex[0], fvals[0], history, xs, it, n_evals, reason)


def fd_gradient(func: Callable, x, f0: float | None = None, rel_step: float = 1e-6,
                box: AdmissibleBox | None = None, feval=None, scheme: str = "forward") -> np.ndarray:
    """Finite-difference gradient with steps ``rel_step * max(|x_i|, 1)``.

    Forward differences by default; a coordinate whose forward point leaves
    ``box`` uses a backward step. ``scheme="central"`` costs twice as many
    evaluations and is second-order accurate.
    """
    x = np.asarray(x, float)
    h = rel_step * np.maximum(np.abs(x), 1.0)
    run = feval if feval is not None else (lambda pts: [func(p) for p in pts])
    if scheme == "central":
        pts = []
        for i in range(x.size):
            for sign in (1.0, -1.0):
                xp = x.copy()
                xp[i] += sign * h[i]
                pts.append(xp)
        vals = np.asarray(run(pts)).reshape(x.size, 2)
        return (vals[:, 0] - vals[:, 1]) / (2 * h)
    if f0 is None:
        f0 = func(x)
    pts = []
    for i in range(x.size):
        xp = x.copy()
        xp[i] += h[i]
        if box is not None and not box.contains(xp):
            xp[i] = x[i] - h[i]
            h[i] = -h[i]
        pts.append(xp)
    return (np.asarray(run(pts)) - f0) / h


def _armijo(f1, x, f, p, slope, scaled, cfg):
    step = 1.0
    if not scaled:
        step = min(1.0, cfg.first_step * max(1.0, np.linalg.norm(x)) / np.linalg.norm(p))
    for _ in range(cfg.max_backtracks):
        x_new = x + step * p
        f_new = f1(x_new)
        if f_new <= f + cfg.armijo_c1 * step * slope:
            return x_new, f_new
        step *= cfg.backtrack
    return None, None


def bfgs(func: Callable, lambda0, cfg: BFGSConfig = BFGSConfig(), workers: int = 1,
         callback: Callable | None = None) -> FitResult:
    """Quasi-Newton minimization with forward-difference gradients.

    Armijo backtracking line search; the inverse-Hessian estimate is reset
    to the identity when the curvature condition fails.
    """
    x = np.asarray(lambda0, float).copy()
    k = x.size
    box = func.box if isinstance(func, Objective) else None
    feval, pool = _evaluator(func, workers)
    n_evals = 0

    def f1(p):
        nonlocal n_evals
        n_evals += 1
        return func(p)

    scheme = cfg.fd_scheme

    def grad(p, fp):
        nonlocal n_evals
        n_evals += k * (2 if scheme == "central" else 1)
        return fd_gradient(func, p, fp, cfg.fd_step, box, feval, scheme)

    try:
        f = f1(x)
        g = grad(x, f)
        H = np.eye(k)
        scaled = False
        history = [f]
        xs = [x.copy()]
        reason = "max_iters"
        it = 0
        while it < cfg.max_iters:
            if np.max(np.abs(g)) <= cfg.g_tol:
                reason = "g_tol"
                break
            p = -H @ g
            slope = g @ p
            if slope >= 0:
                H = np.eye(k)
                scaled = False
                p = -g
                slope = g @ p
            x_new, f_new = _armijo(f1, x, f, p, slope, scaled, cfg)
            if x_new is None and scaled:
                # quasi-Newton direction unusable: retry along steepest descent
                H = np.eye(k)
                scaled = False
                p = -g
                slope = g @ p
                x_new, f_new = _armijo(f1, x, f, p, slope, scaled, cfg)
            if x_new is None and scheme == "forward" and cfg.central_fallback:
                # near the valley floor forward differences are too inaccurate
                scheme = "central"
                g = grad(x, f)
                H = np.eye(k)
                scaled = False
                continue
            if x_new is None:
                reason = "line_search_failed"
                break
            it += 1
            g_new = grad(x_new, f_new)
            s = x_new - x
            yv = g_new - g
            sy = s @ yv
            if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(yv):
                if not scaled:
                    H = np.eye(k) * (sy / (yv @ yv))
                    scaled = True
                rho = 1.0 / sy
                V = np.eye(k) - rho * np.outer(s, yv)
                H = V @ H @ V.T + rho * np.outer(s, s)
            else:
                H = np.eye(k)
                scaled = False
            df = f - f_new
            x, f, g = x_new, f_new, g_new
            history.append(f)
            xs.append(x.copy())
            if callback is not None:
                callback(it, x, f)
            if df <= cfg.f_tol * (1 + abs(f)) and np.linalg.norm(s) <= cfg.x_tol * (1 + np.linalg.norm(x)):
                if scheme == "forward" and cfg.central_fallback:
                    # stalled steps may only reflect forward-difference error
                    scheme = "central"
                    g = grad(x, f)
                    H = np.eye(k)
                    scaled = False
                    continue
                reason = "converged"
                break
    finally:
        if pool is not None:
            pool.shutdown()
    return _finish(func, x, f, history, xs, it, n_evals, reason)
