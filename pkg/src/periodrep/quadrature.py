"""Cumulative quadrature on uniform grids.

Two interchangeable backends build the running integral: a single
sequential pass, and a blocked parallel prefix sum (local scans per block,
exclusive scan of the block totals, offset add). Both accept integrands with
trailing dimensions; the time axis is always axis 0.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericError

RIGHT_RECTANGLE = "right_rectangle"
TRAPEZOID = "trapezoid"
RULES = (RIGHT_RECTANGLE, TRAPEZOID)

# widest range of exponents handled in one block of exp_kernel_cumulative
_EXP_SPAN = 600.0


@dataclass(frozen=True)
class CumulativeIntegral:
    dt: float
    partials: np.ndarray
    rule: str

    @property
    def total(self):
        return self.partials[-1]


def _increments(samples, dt: float, rule: str) -> np.ndarray:
    f = np.asarray(samples, dtype=float)
    if f.shape[0] == 0:
        raise ValueError("cannot integrate an empty sequence")
    if rule == RIGHT_RECTANGLE:
        return f[1:] * dt
    if rule == TRAPEZOID:
        return (f[:-1] + f[1:]) * (0.5 * dt)
    raise ValueError(f"unknown quadrature rule {rule!r}; expected one of {RULES}")


def _with_zero(csum: np.ndarray) -> np.ndarray:
    out = np.empty((csum.shape[0] + 1,) + csum.shape[1:])
    out[0] = 0.0
    out[1:] = csum
    return out


def cumsum_sequential(samples, dt: float, rule: str = TRAPEZOID) -> CumulativeIntegral:
    return CumulativeIntegral(dt, _with_zero(np.cumsum(_increments(samples, dt, rule), axis=0)), rule)


def _blocked_scan(inc: np.ndarray, workers: int, pool: ThreadPoolExecutor | None = None) -> np.ndarray:
    m = inc.shape[0]
    workers = max(1, min(workers, m)) if m else 1
    bounds = np.linspace(0, m, workers + 1).astype(int)
    out = np.empty_like(inc)

    def local(b):
        lo, hi = bounds[b], bounds[b + 1]
        np.cumsum(inc[lo:hi], axis=0, out=out[lo:hi])

    def offset(b, base):
        out[bounds[b]:bounds[b + 1]] += base

    if workers == 1:
        local(0)
        return out

    own = pool is None
    pool = pool or ThreadPoolExecutor(max_workers=workers)
    try:
        list(pool.map(local, range(workers)))
        # exclusive scan of block totals; block 0 keeps its values untouched
        totals = [out[bounds[b + 1] - 1] for b in range(workers - 1)]
        bases = np.cumsum(totals, axis=0)
        list(pool.map(offset, range(1, workers), bases))
    finally:
        if own:
            pool.shutdown()
    return out


def cumsum_scan(samples, dt: float, rule: str = TRAPEZOID, workers: int = 4) -> CumulativeIntegral:
    """Parallel prefix-sum version of :func:`cumsum_sequential`.

    Deterministic for a fixed ``(len(samples), workers)``; ``workers=1`` is
    bitwise identical to the sequential backend.
    """
    if workers < 1:
        raise ValueError(f"workers must be >= 1, got {workers}")
    inc = _increments(samples, dt, rule)
    return CumulativeIntegral(dt, _with_zero(_blocked_scan(inc, workers)), rule)


def cumulative(samples, dt: float, rule: str = TRAPEZOID, workers: int = 1) -> np.ndarray:
    """Running integral as a bare array, using the scan backend when ``workers > 1``."""
    if workers > 1:
        return cumsum_scan(samples, dt, rule, workers).partials
    return cumsum_sequential(samples, dt, rule).partials


def _block_starts(neg_a: np.ndarray) -> list[int]:
    # split where the running range of -A would exceed _EXP_SPAN
    starts = [0]
    lo = hi = neg_a[0]
    for i in range(1, neg_a.size):
        lo = min(lo, neg_a[i])
        hi = max(hi, neg_a[i])
        if hi - lo > _EXP_SPAN and starts[-1] != i - 1:
            starts.append(i - 1)
            lo = min(neg_a[i - 1], neg_a[i])
            hi = max(neg_a[i - 1], neg_a[i])
    return starts


def exp_kernel_cumulative(alpha_samples, w_samples, dt: float, rule: str = TRAPEZOID,
                          workers: int = 1) -> np.ndarray:
    """Forced response of ``q' = alpha(t) q + w(t)`` from ``q(t0) = 0``.

    Returns ``v[i] = int_{t0}^{t_i} exp(A(t_i) - A(tau)) w(tau) dtau`` with
    ``A`` the running integral of ``alpha``. Evaluated as a shifted
    exponential times a cumulative sum; the shift is the running maximum of
    ``-A`` within blocks whose exponent range stays below ``_EXP_SPAN``, and
    blocks are chained through the decay factor between block starts.
    """
    alpha = np.asarray(alpha_samples, dtype=float)
    w = np.asarray(w_samples, dtype=float)
    if alpha.shape != w.shape:
        raise ValueError(f"alpha and w differ in shape: {alpha.shape} vs {w.shape}")
    A = cumulative(alpha, dt, rule, workers)
    if not np.all(np.isfinite(A)):
        raise NumericError("non-finite exponent in kernel", int(np.argmin(np.isfinite(A))))

    neg_a = -A
    if np.ptp(neg_a) <= _EXP_SPAN:
        starts = [0]
    else:
        starts = _block_starts(neg_a)
    starts.append(A.size - 1)

    v = np.empty_like(A)
    v[0] = 0.0
    carry = 0.0
    for b, e in zip(starts[:-1], starts[1:]):
        seg = slice(b, e + 1)
        u = neg_a[seg] - neg_a[b]
        shift = u.max()
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            part = cumulative(np.exp(u - shift) * w[seg], dt, rule, workers)
            local = np.exp(shift - u) * part + np.exp(-u) * carry
        v[seg] = local
        carry = local[-1]
    if not np.all(np.isfinite(v)):
        raise NumericError("non-finite value in exponential-kernel integral",
                           int(np.argmin(np.isfinite(v))))
    return v
