"""Fixed-step explicit Runge-Kutta integration.

Methods are plain Butcher tableaux. Nonlinear simulators go through a numba
loop; linear time-varying systems ``z' = M(t) z`` are stepped by building
the one-step transition matrix of every step at once and chaining them.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .errors import IntegrationBlowUp


@dataclass(frozen=True)
class Tableau:
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray

    @property
    def stages(self) -> int:
        return len(self.b)


def _tableau(a, b, c) -> Tableau:
    s = len(b)
    full = np.zeros((s, s))
    for i, row in enumerate(a):
        full[i, : len(row)] = row
    return Tableau(full, np.asarray(b, float), np.asarray(c, float))


TABLEAUS = {
    "euler": _tableau([[]], [1.0], [0.0]),
    "improved_euler": _tableau([[], [1.0]], [0.5, 0.5], [0.0, 1.0]),
    "rk4": _tableau([[], [0.5], [0.0, 0.5], [0.0, 0.0, 1.0]],
                    [1 / 6, 1 / 3, 1 / 3, 1 / 6], [0.0, 0.5, 0.5, 1.0]),
    # Dormand-Prince 5th-order solution, used at a fixed step (no error control)
    "dopri_fixed": _tableau(
        [[],
         [1 / 5],
         [3 / 40, 9 / 40],
         [44 / 45, -56 / 15, 32 / 9],
         [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
         [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656]],
        [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
        [0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0]),
}


def get_tableau(method: str) -> Tableau:
    try:
        return TABLEAUS[method]
    except KeyError:
        raise ValueError(f"unknown method {method!r}; expected one of {sorted(TABLEAUS)}") from None


@numba.njit(cache=False)
def _rk_loop(rhs, params, y0, h, n_steps, keep_every, a, b, c, t0):
    m = y0.size
    s = b.size
    n_keep = n_steps // keep_every + 1
    out = np.empty((n_keep, m))
    y = y0.copy()
    out[0] = y
    k = np.empty((s, m))
    tmp = np.empty(m)
    j = 1
    for step in range(n_steps):
        t = t0 + step * h
        for i in range(s):
            for d in range(m):
                acc = y[d]
                for jj in range(i):
                    acc += h * a[i, jj] * k[jj, d]
                tmp[d] = acc
            k[i] = rhs(t + c[i] * h, tmp, params)
        for d in range(m):
            acc = 0.0
            for i in range(s):
                acc += b[i] * k[i, d]
            y[d] += h * acc
        if not np.all(np.isfinite(y)):
            out[j:] = np.nan
            return out, step + 1
        if (step + 1) % keep_every == 0:
            out[j] = y
            j += 1
    return out, -1


def integrate_fixed(rhs, params, y0, h: float, n_steps: int, method: str = "rk4",
                    keep_every: int = 1, t0: float = 0.0) -> np.ndarray:
    """Integrate ``y' = rhs(t, y, params)`` with ``n_steps`` steps of size ``h``.

    ``rhs`` must be a numba-jitted function returning a new array. Returns
    the states at every ``keep_every``-th step, starting with ``y0``.
    """
    tab = get_tableau(method)
    out, bad = _rk_loop(rhs, np.asarray(params, float), np.asarray(y0, float), float(h),
                        int(n_steps), int(keep_every), tab.a, tab.b, tab.c, float(t0))
    if bad >= 0:
        raise IntegrationBlowUp(f"{method} integration produced non-finite state", bad)
    return out


def linear_step_matrices(M: np.ndarray, h: float, tableau: Tableau) -> np.ndarray:
    """One-step transition matrices of ``z' = M(t) z``.

    ``M`` has shape ``(n_steps, stages, m, m)``: the system matrix at each
    stage time of each step. Returns ``S`` with ``z_{k+1} = S[k] z_k``.
    """
    n_steps, s, m, _ = M.shape
    eye = np.eye(m)
    K = np.empty((s, n_steps, m, m))
    for i in range(s):
        arg = np.broadcast_to(eye, (n_steps, m, m)).copy()
        for j in range(i):
            if tableau.a[i, j]:
                arg += (h * tableau.a[i, j]) * K[j]
        K[i] = M[:, i] @ arg
    S = np.broadcast_to(eye, (n_steps, m, m)).copy()
    for i in range(s):
        if tableau.b[i]:
            S += (h * tableau.b[i]) * K[i]
    return S


def chain_products(S: np.ndarray, every: int = 1) -> np.ndarray:
    """Cumulative products ``P[k] = S[k-1] ... S[0]`` with ``P[0] = I``.

    Only every ``every``-th product is kept.
    """
    n_steps, m, _ = S.shape
    out = np.empty((n_steps // every + 1, m, m))
    Z = np.eye(m)
    out[0] = Z
    if m == 1:
        prod = np.cumprod(S[:, 0, 0])
        out[1:, 0, 0] = prod[every - 1::every]
        return out
    j = 1
    for k in range(n_steps):
        Z = S[k] @ Z
        if (k + 1) % every == 0:
            out[j] = Z
            j += 1
    return out
