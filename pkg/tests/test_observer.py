from types import SimpleNamespace

import numpy as np
import pytest
import scipy.linalg

from periodrep.canonical import CanonicalSystem, g_on_grid
from periodrep.errors import RepresentationUnavailable
from periodrep.models import morris_lecar as ml
from periodrep.models import predator_prey as pp
from periodrep.observer import (ObserverGains, compute_fundamental_matrix, compute_R,
                                error_dynamics_matrix, pe_check, predict, predict_yhat,
                                recover_x0_theta, transition_matrix)
from periodrep.quadrature import RIGHT_RECTANGLE, TRAPEZOID
from periodrep.signal import SampledSignal


def _sine(T=10.0, n=10001, c=0.0):
    t = np.linspace(0, T, n)
    return SampledSignal.from_values(c + np.sin(2 * np.pi * t / T), T / (n - 1))


def _affine_system(c=0.0, l=-1.0, r=0):
    """g = c + l y, so the stacked forcing top entry is the constant c."""
    phi = (lambda y, t: np.zeros((np.size(y), r))) if r else None
    kw = {"phi": phi} if r else {}
    return CanonicalSystem("affine", 1, r, 1, lambda y, lam, t, q: (c + l * y)[:, None], **kw)


def test_gain_validation():
    ObserverGains([-3.0, -2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ObserverGains([1.0], [1.0])
    with pytest.raises(ValueError):
        ObserverGains([-1.0], [2.0])
    with pytest.raises(ValueError):
        ObserverGains([-3.0, -2.0], [1.0, -1.0])
    with pytest.raises(ValueError):
        ObserverGains([-3.0, 2.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        ObserverGains.default(2)


def test_error_matrix_voltage_model(ml_system, gains):
    M = error_dynamics_matrix(ml_system, gains, 0.7, 0.0)
    np.testing.assert_array_equal(M, [[-1, 0.7, 1], [-0.7, 0, 0], [-1, 0, 0]])


def test_error_matrix_without_regressor(pp_system, gains):
    np.testing.assert_array_equal(error_dynamics_matrix(pp_system, gains, 0.3, 0.0), [[-1.0]])


def test_error_matrix_decoupled():
    sys = CanonicalSystem("zero_phi", 2, 1, 1, lambda y, lam, t, q: np.zeros((np.size(y), 2)),
                          phi=lambda y, t: np.zeros((np.size(y), 1)))
    g = SimpleNamespace(n=2, l=np.zeros(2), b=np.array([1.0, 0.0]), injection_matrix=np.eye(2, k=1))
    M = error_dynamics_matrix(sys, g, 1.3, 0.0)
    expected = np.zeros((3, 3))
    expected[0, 1] = 1.0
    np.testing.assert_array_equal(M, expected)


def test_error_matrix_stacks(ml_system, gains):
    y = np.array([0.1, -2.0, 3.0])
    M = error_dynamics_matrix(ml_system, gains, y, np.zeros(3))
    assert M.shape == (3, 3, 3)
    for k in range(3):
        np.testing.assert_array_equal(M[k], error_dynamics_matrix(ml_system, gains, y[k], 0.0))


def test_scalar_fundamental_matrix(gains):
    y = _sine(T=10.0, n=10001)
    Phi = compute_fundamental_matrix(_affine_system(), gains, y, "rk4", 0.001)
    assert np.max(np.abs(Phi.Phi[:, 0, 0] - np.exp(-y.t))) < 1e-8
    assert Phi.Phi[0, 0, 0] == 1.0


@pytest.mark.parametrize("method", ["rk4", "dopri_fixed"])
def test_constant_output_matrix_exponential(ml_system, gains, method):
    c = 1.7
    y = SampledSignal.from_values(np.full(2001, c), 0.005)
    Phi = compute_fundamental_matrix(ml_system, gains, y, method, 0.001)
    M = error_dynamics_matrix(ml_system, gains, c, 0.0)
    for i in (0, 500, 1337, 2000):
        np.testing.assert_allclose(Phi.Phi[i], scipy.linalg.expm(M * y.t[i]), atol=1e-7)


def test_fundamental_step_must_divide_grid(ml_system, gains):
    y = SampledSignal.from_values(np.ones(11), 0.001)
    with pytest.raises(ValueError):
        compute_fundamental_matrix(ml_system, gains, y, "rk4", 0.0003)


def test_ml_fundamental_matrix(ml_phi):
    np.testing.assert_array_equal(ml_phi.Phi[0], np.eye(3))
    assert ml_phi.spectral_radius() < 1
    assert np.max(np.linalg.cond(ml_phi.Phi[::500])) < 1e12


def test_pp_fundamental_matrix(pp_phi):
    assert pp_phi.Phi[0, 0, 0] == 1.0
    assert pp_phi.spectral_radius() < 1


def test_semigroup(ml_system, gains, ml_data, ml_phi):
    y = ml_data.y
    rng = np.random.default_rng(3)
    for i in rng.integers(1, len(y) - 1, size=3):
        j = len(y) - 1
        restart = transition_matrix(ml_system, gains, y, y.t[i], y.t[j], "dopri_fixed", 0.0002)
        np.testing.assert_allclose(restart @ ml_phi.Phi[i], ml_phi.Phi[j], atol=1e-6)


def test_pe_check_zero_regressor():
    sys = _affine_system(r=1)
    lam_min, ok = pe_check(sys, _sine())
    assert lam_min == 0.0 and not ok


def test_pe_check_sine_gram(ml_system):
    T = 10.0
    lam_min, ok = pe_check(ml_system, _sine(T))
    # Gram of (sin, 1) over one period is diag(T/2, T)
    assert ok
    assert lam_min == pytest.approx(T / 2, rel=1e-6)


def test_pe_check_trivial_and_measured(pp_system, ml_system, ml_data, pp_rk4):
    assert pe_check(pp_system, pp_rk4[0]) == (float("inf"), True)
    assert pe_check(ml_system, ml_data.y)[1]


def test_zero_forcing_gives_zero_R_and_output(gains):
    y = _sine()
    sys = _affine_system(c=0.0)
    Phi = compute_fundamental_matrix(sys, gains, y, "rk4", 0.001)
    np.testing.assert_array_equal(compute_R(sys, gains, Phi, y, [0.0]), [0.0])
    np.testing.assert_array_equal(predict_yhat(sys, gains, Phi, y, [0.0]), np.zeros(len(y)))


def test_constant_forcing_scalar(gains):
    c = 2.5
    y = _sine()
    sys = _affine_system(c=c)
    Phi = compute_fundamental_matrix(sys, gains, y, "rk4", 0.001)
    R = compute_R(sys, gains, Phi, y, [0.0])
    assert abs(R[0] - c) < 1e-6
    np.testing.assert_allclose(predict_yhat(sys, gains, Phi, y, [0.0]), c, atol=1e-6)


def test_singular_period_matrix(gains):
    y = _sine()
    sys = _affine_system(c=1.0, r=1)
    Phi = compute_fundamental_matrix(sys, gains, y, "rk4", 0.001)
    with pytest.raises(RepresentationUnavailable):
        compute_R(sys, gains, Phi, y, [0.0])


def test_recover_x0_theta():
    x0, theta = recover_x0_theta([0.3, -0.5, -15.0], 1)
    assert x0.tolist() == [0.3] and theta.tolist() == [-0.5, -15.0]
    assert ml.linear_block(theta) == (-0.5, 10.0)
    x0, theta = recover_x0_theta([0.2], 1)
    assert theta.size == 0
    x0, theta = recover_x0_theta(np.zeros(3), 1)
    assert not x0.any() and not theta.any()


def test_pp_reduces_to_scalar_formula(pp_system, gains, pp_ie):
    # with Phi = exp(-t): yhat(t) = e^{-t} (R + int_0^t e^{tau} (g + y) dtau)
    x, _ = pp_ie
    Phi = compute_fundamental_matrix(pp_system, gains, x, "rk4", 0.001)
    g = g_on_grid(pp_system, x, pp.TRUE_LAMBDA, RIGHT_RECTANGLE)[:, 0]
    integrand = np.exp(x.t) * (g + x.values)
    C = np.concatenate([[0.0], np.cumsum(integrand[1:] * x.dt)])
    eT = np.exp(-x.period_T)
    R = eT * C[-1] / (1 - eT)
    yhat = np.exp(-x.t) * (R + C)
    pred = predict(pp_system, gains, Phi, x, pp.TRUE_LAMBDA, RIGHT_RECTANGLE)
    np.testing.assert_allclose(pred.yhat, yhat, rtol=1e-9, atol=1e-12)


def test_pp_round_trip(pp_system, gains, pp_phi, pp_rk4):
    x, _ = pp_rk4
    pred = predict(pp_system, gains, pp_phi, x, pp.TRUE_LAMBDA)
    assert np.max(np.abs(pred.yhat - x.values)) < 5e-4
    x0, theta = recover_x0_theta(pred.R)
    assert abs(x0[0] / pp.INITIAL_CONDITION[0] - 1) < 0.01
    assert pred.periodic_residual(pp_phi) <= 1e-6 * (1 + np.linalg.norm(pred.R))


def test_ml_round_trip(ml_system, gains, ml_phi, ml_data):
    y = ml_data.y
    pred = predict(ml_system, gains, ml_phi, y, ml.TRUE_LAMBDA)
    x0, theta = recover_x0_theta(pred.R)
    expected = np.concatenate([[y.values[0]], ml.TRUE_PARAMS.theta])
    np.testing.assert_allclose(pred.R, expected, rtol=0.01)
    assert pred.periodic_residual(ml_phi) <= 1e-6 * (1 + np.linalg.norm(pred.R))
    rms = np.sqrt(np.mean((pred.yhat - y.values) ** 2) / np.mean(y.values**2))
    assert rms <= 1e-2


def test_R_backend_invariance(ml_system, gains, ml_phi, ml_data):
    seq = compute_R(ml_system, gains, ml_phi, ml_data.y, ml.TRUE_LAMBDA, TRAPEZOID, 1)
    par = compute_R(ml_system, gains, ml_phi, ml_data.y, ml.TRUE_LAMBDA, TRAPEZOID, 8)
    np.testing.assert_allclose(par, seq, rtol=1e-9)


def test_predict_at_indices(ml_system, gains, ml_phi, ml_data):
    full = predict(ml_system, gains, ml_phi, ml_data.y, ml.TRUE_LAMBDA).yhat
    idx = np.arange(0, len(ml_data.y), 200)
    part = predict(ml_system, gains, ml_phi, ml_data.y, ml.TRUE_LAMBDA, indices=idx).yhat
    np.testing.assert_array_equal(part, full[idx])
