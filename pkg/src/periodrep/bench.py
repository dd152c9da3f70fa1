"""Batch objective evaluation and a timing harness over evaluation backends.

Backends:

* ``seq``: candidates one after another, sequential quadrature;
* ``scan``: candidates one after another, each quadrature done with the
  blocked parallel scan over ``workers`` threads;
* ``threads(k)``: candidates partitioned over ``k`` threads, sequential
  quadrature inside each evaluation.

All backends share the immutable fundamental matrix and its LU factors.
"""

from __future__ import annotations

import csv
import re
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .canonical import q0_periodic
from .optim import PENALTY, Objective

_THREADS = re.compile(r"threads\((\d+)\)$")
CSV_COLUMNS = ("backend", "n_evals", "wall_seconds", "speedup_vs_seq", "max_discrepancy")


def parse_backend(backend: str) -> tuple[str, int]:
    """``"seq"`` -> ``("seq", 1)``, ``"threads(8)"`` -> ``("threads", 8)``."""
    if backend == "seq":
        return "seq", 1
    if backend == "scan":
        return "scan", 0
    m = _THREADS.match(backend)
    if m and int(m.group(1)) >= 1:
        return "threads", int(m.group(1))
    raise ValueError(f"unknown backend {backend!r}; use seq, scan or threads(k)")


@dataclass(frozen=True)
class BatchResult:
    values: np.ndarray
    flagged: np.ndarray   # True where the candidate got the penalty value


def batch_evaluate(problem: Objective, lambdas, backend: str = "seq",
                   scan_workers: int = 8) -> BatchResult:
    """Objective values for every candidate (search coordinates of ``problem``)."""
    kind, k = parse_backend(backend)
    cands = np.atleast_2d(np.asarray(lambdas, float))
    n = cands.shape[0]
    values = np.empty(n)
    ok = np.empty(n, bool)

    def run(i, workers):
        values[i], ok[i] = problem.evaluate(cands[i], workers)

    if kind == "seq":
        for i in range(n):
            run(i, 1)
    elif kind == "scan":
        for i in range(n):
            run(i, scan_workers)
    else:
        # contiguous chunks, one per worker; each writes its own slots
        chunks = np.array_split(np.arange(n), k)
        with ThreadPoolExecutor(max_workers=k) as pool:
            list(pool.map(lambda idx: [run(i, 1) for i in idx], chunks))
    return BatchResult(values, ~ok)


def draw_candidates(problem: Objective, n: int, seed: int) -> np.ndarray:
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if problem.box is None:
        raise ValueError("candidates are drawn from the admissible box; the objective has none")
    return problem.box.sample(np.random.default_rng(seed), n)


def _relative_gap(a: np.ndarray, ref: np.ndarray) -> float:
    scale = np.maximum(np.abs(ref), np.finfo(float).tiny)
    return float(np.max(np.abs(a - ref) / scale))


@dataclass
class BenchReport:
    n_evals: int
    seed: int
    rows: list = field(default_factory=list)
    values: dict = field(default_factory=dict)

    def add(self, backend: str, seconds: float, values: np.ndarray | None, flagged=None):
        seq = self.rows[0]["wall_seconds"] if self.rows else seconds
        gap = float("nan")
        if values is not None:
            ref = self.values.get("seq", values)
            gap = _relative_gap(values, ref)
            self.values[backend] = values
        self.rows.append({"backend": backend, "n_evals": self.n_evals, "wall_seconds": seconds,
                          "speedup_vs_seq": seq / seconds if seconds > 0 else float("inf"),
                          "max_discrepancy": gap})

    def row(self, backend: str) -> dict:
        for r in self.rows:
            if r["backend"] == backend:
                return r
        raise KeyError(backend)

    @property
    def max_discrepancy(self) -> float:
        gaps = [r["max_discrepancy"] for r in self.rows if not np.isnan(r["max_discrepancy"])]
        return max(gaps) if gaps else 0.0

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, CSV_COLUMNS)
            w.writeheader()
            for r in self.rows:
                w.writerow({k: (format(v, ".17g") if isinstance(v, float) else v)
                            for k, v in r.items()})


def _timed(fn: Callable):
    t = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t


def bench_report(problem: Objective, n: int, seed: int = 0, workers: int = 8,
                 direct: Callable | None = None) -> BenchReport:
    """Time ``seq``, ``scan`` and ``threads(workers)`` on ``n`` random admissible candidates.

    ``direct(lam_physical)`` optionally adds an informational row that fits
    the data by direct time stepping; it has no discrepancy column.
    """
    cands = draw_candidates(problem, n, seed)
    report = BenchReport(n, seed)
    for backend in ("seq", "scan", f"threads({workers})"):
        res, secs = _timed(lambda: batch_evaluate(problem, cands, backend, scan_workers=workers))
        report.add(backend, secs, res.values, res.flagged)
    if direct is not None:
        _, secs = _timed(lambda: [direct(problem.physical(c)) for c in cands])
        report.add("euler", secs, None)
    return report


def direct_objective(problem: Objective, direct_output: Callable, method: str = "euler") -> Callable:
    """Sum of squared errors of a directly stepped trajectory, for the baseline row.

    The hidden state starts from its periodic value for the candidate, so
    the baseline solves the same problem as the integral representation.
    """
    y = problem.signal
    idx = problem.indices

    def f(lam):
        try:
            with np.errstate(all="ignore"):
                q0 = float(q0_periodic(problem.system, y, lam)[0])
                out = direct_output(lam, float(y.values[0]), q0, y.dt, len(y) - 1, method)
            r = out[idx] - y.values[idx]
            val = float(r @ r)
            return val if np.isfinite(val) else PENALTY
        except Exception:  # noqa: BLE001 - informational row, any failure is a penalty
            return PENALTY

    return f
