import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from voutl.control import (ControllerState, InputError, LoopModel, ObservationHistory,
                           SynthesisError, control_input, lqg_window_cost, reset_estimate,
                           riccati_residual, solve_lqr, spectral_radius, step_plant,
                           window_bounds)


def scalar_dare(a, b=1.0, q=1.0, r=1.0):
    """Positive root of the scalar Riccati quadratic."""
    # P = q + a^2 P - a^2 b^2 P^2 / (r + b^2 P)  ->  b^2 P^2 + (r - a^2 r - q b^2) P - q r = 0
    c1 = r - a * a * r - q * b * b
    P = (-c1 + math.sqrt(c1 * c1 + 4 * b * b * q * r)) / (2 * b * b)
    return P, a * b * P / (r + b * b * P)


# values from the closed-form root above
P_12, K_12 = 1.952233744059949, 0.7935281200499574
P_05, K_05 = 1.1327822185373186, 0.2655644370746374


def test_oracle_constants_match_closed_form():
    assert scalar_dare(1.2) == pytest.approx((P_12, K_12), abs=1e-15)
    assert scalar_dare(0.5) == pytest.approx((P_05, K_05), abs=1e-15)


@pytest.mark.parametrize("a,P_ref,K_ref", [(1.2, P_12, K_12), (0.5, P_05, K_05), (0.0, 1.0, 0.0)])
def test_solve_lqr_scalar(a, P_ref, K_ref):
    P, K = solve_lqr(a, 1.0, 1.0, 1.0)
    assert P[0, 0] == pytest.approx(P_ref, abs=1e-9)
    assert K[0, 0] == pytest.approx(K_ref, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(0.2, 3), q=st.floats(0.1, 5), r=st.floats(0.1, 5))
def test_solve_lqr_matches_closed_form(a, b, q, r):
    P, K = solve_lqr(a, b, q, r)
    P_ref, K_ref = scalar_dare(a, b, q, r)
    assert P[0, 0] == pytest.approx(P_ref, rel=1e-8)
    assert K[0, 0] == pytest.approx(K_ref, rel=1e-8, abs=1e-10)
    assert abs(a - b * K[0, 0]) < 1


def test_solve_lqr_vector_against_scipy():
    from scipy.linalg import solve_discrete_are
    A = np.array([[1.1, 0.3], [0.0, 0.9]])
    B = np.array([[0.0], [1.0]])
    Q, R = np.eye(2), np.array([[0.5]])
    P, K = solve_lqr(A, B, Q, R)
    np.testing.assert_allclose(P, solve_discrete_are(A, B, Q, R), rtol=1e-9)
    assert riccati_residual(A, B, Q, R, P) < 1e-10
    assert spectral_radius(A - B @ K) < 1


def test_solve_lqr_errors():
    with pytest.raises(InputError):
        solve_lqr(np.eye(2), np.ones((3, 1)), np.eye(2), 1.0)
    with pytest.raises(SynthesisError):
        # uncontrollable unstable mode
        solve_lqr(np.diag([1.5, 0.5]), np.array([[0.0], [1.0]]), np.eye(2), 1.0, max_iter=2000)
    with pytest.raises(InputError):
        solve_lqr(0.5, 0.0, 1.0, 0.0)


def test_loop_model_validation():
    m = LoopModel.scalar()
    assert m.optimal_cost == pytest.approx(P_12)
    with pytest.raises(InputError):
        LoopModel.scalar(r=0.0)
    with pytest.raises(InputError):
        LoopModel.scalar(sigma=-1.0)
    with pytest.raises(InputError):
        LoopModel.scalar(T=0.0)


def test_step_plant_and_control_input():
    m = LoopModel.scalar()
    assert step_plant(1.0, 0.0, 0.0, m)[0] == pytest.approx(1.2)
    assert step_plant(0.0, 0.0, 0.5, m)[0] == pytest.approx(0.5)
    assert step_plant(1.0, -K_12, 0.0, m)[0] == pytest.approx(1.2 - K_12)
    assert control_input(1.0, m.K)[0] == pytest.approx(-K_12)
    assert control_input(-2.0, m.K)[0] == pytest.approx(2 * K_12)
    assert control_input(0.0, m.K)[0] == 0.0
    with pytest.raises(InputError):
        step_plant([1.0, 2.0], 0.0, 0.0, m)


def test_controller_tick_rules():
    m = LoopModel.scalar()
    ctrl = ControllerState(m)
    u0 = ctrl.tick(0, [(0, np.array([1.0]))])
    assert ctrl.x_hat[0] == 1.0 and ctrl.aoi == 0
    assert u0[0] == pytest.approx(-K_12)
    ctrl.tick(1)
    assert ctrl.x_hat[0] == pytest.approx(1.2 - K_12)
    before = ctrl.x_hat.copy()
    # a stale measurement changes nothing beyond normal propagation
    ref = ControllerState(m)
    ref.tick(0, [(0, np.array([1.0]))])
    ref.tick(1)
    ref.tick(2)
    ctrl.tick(2, [(0, np.array([5.0]))])
    assert ctrl.x_hat[0] == pytest.approx(ref.x_hat[0])
    assert ctrl.aoi == 2
    assert before.shape == (1,)
    with pytest.raises(InputError):
        ctrl.tick(5)


def test_controller_input_window_overflow():
    m = LoopModel.scalar()
    ctrl = ControllerState(m, window=4)
    for k in range(10):
        ctrl.tick(k)
    with pytest.raises(InputError):
        ctrl.tick(10, [(2, np.array([0.0]))])


def test_estimation_error_identity():
    """x_k - x_hat_k is the noise accumulated since the freshest measurement."""
    m = LoopModel.scalar()
    rng = np.random.default_rng(3)
    w = rng.normal(size=40)
    ctrl = ControllerState(m)
    x = np.array([0.3])
    xs = []
    for k in range(40):
        xs.append(x.copy())
        arrivals = [(k - 3, xs[k - 3])] if k >= 3 and k % 7 == 0 else []
        u = ctrl.tick(k, arrivals)
        if ctrl.nu is not None:
            delta = k - ctrl.nu
            expected = sum(1.2 ** (q - 1) * w[k - q] for q in range(1, delta + 1))
            assert x[0] - ctrl.x_hat[0] == pytest.approx(expected, abs=1e-9)
        x = step_plant(x, u, w[k], m)


def test_observation_history_freshest():
    h = ObservationHistory()
    h.add(5, 9, 1.0)
    h.add(7, 8, 2.0)
    h.add(3, 4, 0.5)
    assert h.freshest(3) is None
    assert h.freshest(4).gen_step == 3
    assert h.freshest(8).gen_step == 7
    assert h.freshest(9).gen_step == 7
    assert h.aoi(8) == 1 and h.aoi(2) == 3
    with pytest.raises(InputError):
        h.add(5, 4, 0.0)


def test_reset_estimate():
    m = LoopModel.scalar()
    x = reset_estimate(1.0, 0, 2, {0: np.array([-K_12]), 1: np.array([0.0])}, m)
    assert x[0] == pytest.approx(1.2 * (1.2 - K_12))


def test_lqg_window_cost():
    n = 8001
    assert window_bounds(0) == (2000, 3000)
    assert lqg_window_cost(np.zeros(n), np.zeros(n), 1.0, 1.0, 2) == 0.0
    assert lqg_window_cost(np.ones(n), np.zeros(n), 1.0, 1.0, 4) == 1.0
    x = np.arange(n, dtype=float)
    assert lqg_window_cost(x, np.zeros(n), 1.0, 1.0, 0) == pytest.approx(np.mean(x[2000:3001] ** 2))
    with pytest.raises(InputError):
        lqg_window_cost(np.zeros(7000), np.zeros(7000), 1.0, 1.0, 4)
    with pytest.raises(InputError):
        lqg_window_cost(np.zeros(n), np.zeros(n), 1.0, 1.0, 5)


def test_closed_loop_variance_matches_optimum():
    """Stationary cost of x' = (A-BK)x + w times (Q + K^2 R) equals P sigma^2."""
    m = LoopModel.scalar()
    a = (m.A - m.B @ m.K)[0, 0]
    k = m.K[0, 0]
    assert (1 + k * k) / (1 - a * a) == pytest.approx(m.optimal_cost, rel=1e-12)
