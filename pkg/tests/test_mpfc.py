import numpy as np
import pytest
from scipy.linalg import expm

from gpfollow.mpfc import (
    MPFCSolver,
    OcpConfig,
    discretize,
    objective,
    path_residual,
    path_state_at,
    reference_for_period,
    shift_inputs,
    solve,
)
from gpfollow.paths import PathSpec, reference_state
from oracles import riccati_tracking

LINE = PathSpec("straight_line", {"origin": [0.0, 0.0, 1.0], "direction": [1.0, 0.0, 0.0], "speed": 1.0},
                (0.0, 100.0))
CIRCLE = PathSpec("circle")


def test_discretize_matches_matrix_exponential():
    dt = 0.1
    A, B = discretize(dt)
    Ac = np.zeros((12, 12))
    for ip, iv in [(0, 3), (1, 4), (2, 5), (6, 7)]:
        Ac[ip, iv] = 1.0
    for i, iv in enumerate([3, 4, 5, 7]):
        Ac[iv, 8 + i] = 1.0
    E = expm(Ac * dt)
    np.testing.assert_allclose(A, E[:8, :8], atol=1e-14)
    np.testing.assert_allclose(B, E[:8, 8:], atol=1e-14)
    with pytest.raises(ValueError):
        discretize(0.0)


def test_config_validation():
    with pytest.raises(ValueError):
        OcpConfig(horizon=0)
    with pytest.raises(ValueError):
        OcpConfig(r_a=(0.0, 1.0, 1.0))
    with pytest.raises(ValueError):
        OcpConfig(eps_theta=0.0)


def _riccati_line(cfg, x0, theta0, vel0):
    """Same straight-line problem written as an affine LQR on (z, 1)."""
    A, B = discretize(cfg.dt)
    d = np.array([1.0, 0.0, 0.0])
    origin = np.array([0.0, 0.0, 1.0])
    # residual r = Cz - c
    C = np.zeros((6, 8))
    C[:3, :3] = np.eye(3)
    C[:3, 6] = -d
    C[3:, 3:6] = np.eye(3)
    C[3:, 7] = -d
    c = np.r_[origin, np.zeros(3)]
    Ca = np.hstack([C, -c[:, None]])
    Aa = np.eye(9)
    Aa[:8, :8] = A
    Ba = np.vstack([B, np.zeros((1, 4))])
    Qa = Ca.T @ cfg.Q @ Ca
    R = np.zeros((4, 4))
    R[:3, :3] = cfg.R
    R[3, 3] = cfg.r_theta
    us, xs = riccati_tracking(Aa, Ba, Qa, R, np.r_[x0, theta0, vel0, 1.0], cfg.horizon)
    return us, xs


def test_straight_line_matches_riccati():
    cfg = OcpConfig(a_min=(-1e3,) * 3, a_max=(1e3,) * 3, theta_acc_min=-1e3, theta_acc_max=1e3)
    x0 = np.array([0.3, -0.2, 1.1, 0.5, 0.1, 0.0])
    theta0, vel0 = 0.5, 1.0
    sol = solve(x0, theta0, vel0, LINE, cfg)
    us, xs = _riccati_line(cfg, x0, theta0, vel0)
    assert xs[:, 7].min() > cfg.eps_theta  # speed bound inactive
    np.testing.assert_allclose(sol.controls, us[:, :3], atol=1e-6)
    np.testing.assert_allclose(sol.theta_acc, us[:, 3], atol=1e-6)
    np.testing.assert_allclose(sol.states, xs[:, :6], atol=1e-6)
    np.testing.assert_allclose(sol.theta, xs[:, 6], atol=1e-6)
    assert sol.converged and sol.iterations <= 3


def test_on_path_state_needs_no_effort():
    cfg = OcpConfig()
    ref = reference_state(LINE, 2.0, 1.0)
    sol = solve(ref.state, 2.0, 1.0, LINE, cfg)
    assert np.max(np.abs(sol.inputs())) <= 1e-9
    assert sol.objective <= 1e-12


def test_circle_plan_respects_bounds_and_descends():
    cfg = OcpConfig()
    x0 = reference_state(CIRCLE, 0.0, 1.0).state + np.array([0.4, -0.3, 0.2, 0.0, 0.5, 0.0])
    sol = solve(x0, 0.0, 0.5, CIRCLE, cfg)
    assert np.all(sol.controls >= -2.0 - 1e-9) and np.all(sol.controls <= 2.0 + 1e-9)
    assert np.all(np.abs(sol.theta_acc) <= 5.0 + 1e-9)
    assert np.all(sol.theta_vel[1:] >= cfg.eps_theta - 1e-9)
    assert np.all(np.diff(sol.objective_history) <= 1e-12)
    assert sol.objective == pytest.approx(objective(sol, CIRCLE, cfg), rel=1e-10)
    # states follow the exact discrete model
    A, B = discretize(cfg.dt)
    z = np.r_[sol.states[0], sol.theta[0], sol.theta_vel[0]]
    for k in range(cfg.horizon):
        z = A @ z + B @ np.r_[sol.controls[k], sol.theta_acc[k]]
        np.testing.assert_allclose(z, np.r_[sol.states[k + 1], sol.theta[k + 1], sol.theta_vel[k + 1]],
                                   atol=1e-10)


def test_warm_start_and_shift():
    cfg = OcpConfig()
    solver = MPFCSolver(CIRCLE, cfg)
    x0 = reference_state(CIRCLE, 0.0, 1.0).state + 0.1
    first = solver.solve(x0, 0.0, 1.0)
    W = shift_inputs(first).reshape(cfg.horizon, 4)
    np.testing.assert_array_equal(W[:-1], first.inputs().reshape(cfg.horizon, 4)[1:])
    np.testing.assert_array_equal(W[-1], W[-2])
    second = solver.solve(first.states[1], first.theta[1], first.theta_vel[1], warm=first)
    assert second.converged


def test_stopping_at_path_end():
    cfg = OcpConfig()
    path = PathSpec("circle", theta_range=(0.0, 1.0))
    x0 = reference_state(path, 0.95, 1.0).state
    sol = solve(x0, 0.95, 1.0, path, cfg)
    assert np.all(sol.theta_vel[1:] >= cfg.eps_theta - 1e-9)
    assert np.all(np.diff(sol.theta) >= -1e-12)


def test_invalid_inputs():
    cfg = OcpConfig()
    with pytest.raises(ValueError):
        solve(np.full(6, np.nan), 0.0, 1.0, CIRCLE, cfg)
    with pytest.raises(ValueError):
        solve(np.zeros(6), -1.0, 1.0, CIRCLE, cfg)


def test_reference_for_period_is_exact_flow():
    cfg = OcpConfig()
    sol = solve(reference_state(CIRCLE, 0.0, 1.0).state + 0.05, 0.0, 1.0, CIRCLE, cfg)
    x0, a0 = reference_for_period(sol, 0.0)
    np.testing.assert_array_equal(x0, sol.states[0])
    x1, _ = reference_for_period(sol, cfg.dt)
    np.testing.assert_allclose(x1, sol.states[1], atol=1e-12)
    th, vel = path_state_at(sol, cfg.dt)
    assert th == pytest.approx(sol.theta[1]) and vel == pytest.approx(sol.theta_vel[1])


def test_residual_zero_on_reference():
    th = np.linspace(0, 5, 7)
    states = np.hstack([CIRCLE.eval(th), CIRCLE.eval_derivative(th) * 0.7])
    assert np.max(np.abs(path_residual(states, th, np.full(7, 0.7), CIRCLE))) <= 1e-14


def test_reference_velocity_differentiates_to_feedforward():
    cfg = OcpConfig()
    sol = solve(reference_state(CIRCLE, 0.0, 1.0).state + 0.05, 0.0, 1.0, CIRCLE, cfg)
    h, tau = 1e-5, 0.04
    (xp, a_d), (xm, _) = reference_for_period(sol, tau + h), reference_for_period(sol, tau - h)
    np.testing.assert_allclose((xp[3:] - xm[3:]) / (2 * h), a_d, atol=1e-6)
    np.testing.assert_allclose((xp[:3] - xm[:3]) / (2 * h), reference_for_period(sol, tau)[0][3:], atol=1e-6)
