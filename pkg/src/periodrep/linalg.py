"""Batched LU factorization for stacks of small dense matrices.

Partial pivoting is done one column at a time across the whole batch, so a
stack of ``N`` matrices of size ``m`` costs ``O(m^3)`` vectorized numpy
operations of length ``N`` rather than ``N`` separate LAPACK calls.
"""

from __future__ import annotations

import numpy as np


def lu_factor_batched(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Factor ``a[k] = P_k L_k U_k`` for every ``k``.

    Returns the packed factors (unit-lower ``L`` below the diagonal, ``U`` on
    and above it) and the row-swap sequence ``piv`` in LAPACK convention:
    at step ``j`` row ``j`` was exchanged with row ``piv[:, j]``.
    """
    lu = np.array(a, dtype=float, copy=True)
    if lu.ndim != 3 or lu.shape[1] != lu.shape[2]:
        raise ValueError(f"expected a stack of square matrices, got shape {lu.shape}")
    n_batch, m, _ = lu.shape
    piv = np.empty((n_batch, m), dtype=np.intp)
    rows = np.arange(n_batch)
    for j in range(m):
        p = j + np.argmax(np.abs(lu[:, j:, j]), axis=1)
        piv[:, j] = p
        swap = p != j
        if np.any(swap):
            r = rows[swap]
            tmp = lu[r, j, :].copy()
            lu[r, j, :] = lu[r, p[swap], :]
            lu[r, p[swap], :] = tmp
        pivot = lu[:, j, j]
        if np.any(pivot == 0.0):
            k = int(np.flatnonzero(pivot == 0.0)[0])
            raise np.linalg.LinAlgError(f"matrix {k} is singular")
        if j + 1 < m:
            lu[:, j + 1:, j] /= pivot[:, None]
            lu[:, j + 1:, j + 1:] -= lu[:, j + 1:, j, None] * lu[:, j, None, j + 1:]
    return lu, piv


def lu_solve_batched(factors: tuple[np.ndarray, np.ndarray], b: np.ndarray) -> np.ndarray:
    """Solve ``a[k] x[k] = b[k]`` given :func:`lu_factor_batched` output.

    ``b`` has shape ``(N, m)`` or ``(N, m, k)``.
    """
    lu, piv = factors
    n_batch, m, _ = lu.shape
    x = np.array(b, dtype=float, copy=True)
    vec = x.ndim == 2
    if vec:
        x = x[:, :, None]
    rows = np.arange(n_batch)
    for j in range(m):
        p = piv[:, j]
        swap = p != j
        if np.any(swap):
            r = rows[swap]
            tmp = x[r, j, :].copy()
            x[r, j, :] = x[r, p[swap], :]
            x[r, p[swap], :] = tmp
    for j in range(m):
        if j:
            x[:, j, :] -= np.einsum("ni,nik->nk", lu[:, j, :j], x[:, :j, :])
    for j in range(m - 1, -1, -1):
        if j + 1 < m:
            x[:, j, :] -= np.einsum("ni,nik->nk", lu[:, j, j + 1:], x[:, j + 1:, :])
        x[:, j, :] /= lu[:, j, j, None]
    return x[:, :, 0] if vec else x
