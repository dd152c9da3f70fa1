"""Acceptance gates, one test per criterion, each printing a single PASS/FAIL line."""

import os
import time

import numpy as np
import pytest

from periodrep.bench import bench_report
from periodrep.canonical import q_trajectory
from periodrep.models import get_model
from periodrep.models import morris_lecar as ml
from periodrep.models import predator_prey as pp
from periodrep.observer import (ObserverGains, compute_fundamental_matrix, compute_R, predict,
                                recover_x0_theta)
from periodrep.optim import NelderMeadConfig, Objective, bfgs, fd_gradient, nelder_mead
from periodrep.quadrature import RIGHT_RECTANGLE, TRAPEZOID, cumsum_scan, cumsum_sequential


def verdict(capsys, name, ok, detail):
    with capsys.disabled():
        print(f"\n[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, detail


def _ml_setup():
    system = ml.morris_lecar_system()
    gains = ObserverGains.default()
    data = ml.ml_dataset()
    Phi = compute_fundamental_matrix(system, gains, data.y, "dopri_fixed", 0.0002)
    return system, gains, data, Phi


def _ml_objective(system, gains, Phi, y):
    entry = get_model("morris_lecar")
    return Objective(system, gains, Phi, y, stride=200, rule=TRAPEZOID,
                     parametrization=entry.parametrization, box=entry.box)


@pytest.fixture(scope="module")
def ml_setup():
    return _ml_setup()


def test_predator_prey_representation_fidelity(capsys):
    t0 = time.perf_counter()
    x, _ = pp.pp_dataset(method="improved_euler")
    system = pp.predator_prey_system()
    gains = ObserverGains([-1.0], [1.0])
    Phi = compute_fundamental_matrix(system, gains, x, "rk4", 0.001)
    yhat = predict(system, gains, Phi, x, pp.TRUE_LAMBDA, RIGHT_RECTANGLE).yhat
    err = float(np.max(np.abs(yhat - x.values)))
    secs = time.perf_counter() - t0
    verdict(capsys, "predator-prey fidelity", err <= 5e-4 and secs <= 60,
            f"max |yhat - x| = {err:.3e} (<= 5e-4), {secs:.1f} s (<= 60 s)")


def test_predator_prey_parameter_recovery(capsys):
    # the reference estimates sit inside the same 1% gate
    assert np.all(np.abs(pp.REPORTED_LAMBDA / pp.TRUE_LAMBDA - 1) <= 0.01)
    t0 = time.perf_counter()
    x, _ = pp.pp_dataset(method="rk4")
    system = pp.predator_prey_system()
    gains = ObserverGains.default()
    Phi = compute_fundamental_matrix(system, gains, x)
    obj = Objective(system, gains, Phi, x, stride=1, rule=TRAPEZOID, box=pp.BOX)
    cfg = NelderMeadConfig()
    assert (cfg.reflection, cfg.expansion, cfg.contraction) == (1.0, 2.0, 0.5)
    res = nelder_mead(obj, pp.START_LAMBDA, cfg)
    secs = time.perf_counter() - t0
    rel = np.abs(res.lambda_hat / pp.TRUE_LAMBDA - 1)
    verdict(capsys, "predator-prey recovery", bool(np.all(rel <= 0.01)) and secs <= 300,
            f"lambda_hat = {np.round(res.lambda_hat, 5).tolist()}, max rel err {rel.max():.2e} "
            f"(<= 1e-2), {secs:.1f} s (<= 300 s)")


def test_morris_lecar_linear_block(capsys):
    t0 = time.perf_counter()
    system, gains, data, Phi = _ml_setup()
    R = compute_R(system, gains, Phi, data.y, ml.TRUE_LAMBDA, TRAPEZOID)
    _, theta = recover_x0_theta(R, system.n)
    gL, current = ml.linear_block(theta)
    secs = time.perf_counter() - t0
    e_gl = abs(gL / -0.5 - 1)
    e_i = abs(current / 10.0 - 1)
    verdict(capsys, "Morris-Lecar linear block", e_gl <= 0.1 and e_i <= 0.1 and secs <= 300,
            f"gL = {gL:.5f} (rel {e_gl:.1e}), I = {current:.5f} (rel {e_i:.1e}), {secs:.1f} s")


def test_morris_lecar_representation_fidelity(capsys, ml_setup):
    system, gains, data, Phi = ml_setup
    y = data.y.values
    yhat = predict(system, gains, Phi, data.y, ml.TRUE_LAMBDA).yhat
    ratio = float(np.sqrt(np.mean((yhat - y) ** 2) / np.mean(y**2)))
    verdict(capsys, "Morris-Lecar fidelity", ratio <= 1e-2, f"RMS ratio {ratio:.2e} (<= 1e-2)")


@pytest.mark.slow
def test_morris_lecar_full_fit(capsys, ml_setup):
    system, gains, data, Phi = ml_setup
    obj = _ml_objective(system, gains, Phi, data.y)
    rng = np.random.default_rng([0, 0])
    start = ml.TRUE_LAMBDA * (1 + 0.05 * rng.choice([-1.0, 1.0], ml.TRUE_LAMBDA.size))
    t0 = time.perf_counter()
    res = bfgs(obj, obj.parametrization.to_search(start))
    secs = time.perf_counter() - t0
    lam = res.lambda_hat
    rel = np.abs(lam / ml.TRUE_LAMBDA - 1)
    verdict(capsys, "Morris-Lecar full fit", bool(np.all(rel <= 0.05)) and secs <= 1800,
            f"{res.reason}, lambda = {np.round(lam, 4).tolist()}, max rel err {rel.max():.2e} "
            f"(<= 5e-2), {secs:.1f} s (<= 1800 s)")


def test_scan_matches_sequential(capsys):
    rng = np.random.default_rng(2024)
    n = 10**6
    t = np.linspace(0.0, 50.0, n)
    worst = 0.0
    for _ in range(3):
        freq = rng.uniform(0.1, 3.0, 4)
        phase = rng.uniform(0, 2 * np.pi, 4)
        amp = rng.uniform(0.0, 0.2, 4)
        f = 1.5 + np.sum(amp[:, None] * np.sin(freq[:, None] * t + phase[:, None]), axis=0)
        for rule in (RIGHT_RECTANGLE, TRAPEZOID):
            ref = cumsum_sequential(f, t[1] - t[0], rule).partials
            for workers in (1, 2, 7, 8, 64):
                got = cumsum_scan(f, t[1] - t[0], rule, workers).partials
                worst = max(worst, float(np.max(np.abs(got[1:] - ref[1:]) / np.abs(ref[1:]))))
    verdict(capsys, "scan vs sequential", worst <= 1e-9, f"max relative gap {worst:.2e} (<= 1e-9)")


def test_parallel_throughput(capsys, ml_setup):
    system, gains, data, Phi = ml_setup
    obj = _ml_objective(system, gains, Phi, data.y)
    report = bench_report(obj, 1000, seed=0, workers=8)
    speedup = report.row("threads(8)")["speedup_vs_seq"]
    gap = report.max_discrepancy
    verdict(capsys, "parallel throughput", speedup >= 4.0 and gap <= 1e-9,
            f"threads(8) speedup {speedup:.2f}x (>= 4x) on {os.cpu_count()} hardware threads, "
            f"cross-backend gap {gap:.2e} (<= 1e-9)")


def test_invariant_suite(capsys, ml_setup):
    checks = {}
    gains = ObserverGains.default()
    x, z = pp.pp_dataset(method="rk4")
    pp_sys = pp.predator_prey_system()
    pp_phi = compute_fundamental_matrix(pp_sys, gains, x)
    ml_sys, _, data, ml_phi = ml_setup

    for name, sys_, y, Phi, lam in (("pp", pp_sys, x, pp_phi, pp.TRUE_LAMBDA),
                                    ("ml", ml_sys, data.y, ml_phi, ml.TRUE_LAMBDA)):
        checks[f"{name} Phi(t0) = I"] = np.array_equal(Phi.Phi[0], np.eye(Phi.Phi.shape[1]))
        checks[f"{name} spectral radius < 1"] = Phi.spectral_radius() < 1
        pred = predict(sys_, gains, Phi, y, lam)
        checks[f"{name} periodic residual"] = pred.periodic_residual(Phi) <= 1e-6 * (1 + np.linalg.norm(pred.R))
        q = q_trajectory(sys_, y, lam)[:, 0]
        checks[f"{name} q closes"] = abs(q[-1] - q[0]) <= 10 * y.dt

    q = pp.transformed_q(pp.TRUE_PARAMS, x.values, z.values)
    g = pp_sys.g(x.values, pp.TRUE_LAMBDA, x.t, q[:, None])[:, 0]
    dx, _ = pp.rhs(pp.TRUE_PARAMS, x.values, z.values)
    checks["pp reduction equivalence"] = np.max(np.abs(g - dx)) <= 1e-9

    P = ml.TRUE_PARAMS
    yv, qv = data.y.values, data.q.values
    total = ml_sys.phi_on_grid(data.y) @ P.theta + ml_sys.g(yv, ml.TRUE_LAMBDA, data.y.t, qv[:, None])[:, 0]
    direct, _ = ml.rhs(P, yv, qv)
    checks["ml reduction equivalence"] = np.max(np.abs(total - direct)) <= 1e-9 * (1 + np.max(np.abs(direct)))

    obj = Objective(pp_sys, gains, pp_phi, x, stride=10, box=pp.BOX)
    lam = pp.TRUE_LAMBDA * (1 + 0.2 * np.random.default_rng(8).uniform(-1, 1, 5))
    g1, g2, g3 = (fd_gradient(obj, lam, rel_step=h) for h in (1e-3, 5e-4, 2.5e-4))
    ratio = (g1 - g2) / (g2 - g3)
    checks["FD Richardson ratio"] = bool(np.all((ratio >= 1.5) & (ratio <= 2.5)))

    failed = [k for k, ok in checks.items() if not ok]
    verdict(capsys, "invariant suite", not failed,
            f"{len(checks) - len(failed)}/{len(checks)} checks hold" + (f"; failed: {failed}" if failed else ""))
