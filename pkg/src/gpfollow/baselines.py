"""Comparison controllers: geometric guidance targets (carrot chasing and
nonlinear guidance law), feedforward linearization variants, and a
time-parameterised tracking MPC."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from .lbfblc import Gains, adaptive_term
from .mpfc import OcpConfig, OcpSolution, _condense, discretize
from .paths import PathSpec, arc_length, min_distance, reference_state
from .qp import solve_qp


@dataclass(frozen=True)
class GuidanceConfig:
    d1: float = 0.3
    d2: float = 0.3
    theta_vel: float = 1.0
    search_window: float = 2.0

    def __post_init__(self) -> None:
        if self.d1 <= 0 or self.d2 <= 0:
            raise ValueError("guidance distances must be positive")


def _project(path: PathSpec, p, theta_min, config: GuidanceConfig) -> float:
    if theta_min is None:
        return min_distance(path, p)[1]
    return min_distance(path, p, theta_lo=theta_min, theta_hi=theta_min + config.search_window)[1]


def _target(path: PathSpec, theta: float, config: GuidanceConfig):
    ref = reference_state(path, theta, config.theta_vel)
    return ref.state, np.zeros(3), theta


def carrot_target(path: PathSpec, p, config: GuidanceConfig, theta_min: float | None = None):
    """Point an arc length ``d1`` ahead of the projection of ``p``.

    Returns ``(x_d, a_d, theta_target)``; the target is clamped at the path
    end. Projection ties go to the smallest ``theta``.
    """
    theta_p = _project(path, p, theta_min, config)
    end = path.theta_end
    if arc_length(path, theta_p, end) <= config.d1:
        return _target(path, end, config)
    theta_t = brentq(lambda th: arc_length(path, theta_p, th) - config.d1, theta_p, end, xtol=1e-12)
    return _target(path, float(theta_t), config)


def nlgl_target(path: PathSpec, p, config: GuidanceConfig, theta_min: float | None = None,
                n_grid: int = 2000):
    """First path point at distance ``d2`` from ``p`` beyond the projection.

    Falls back to the projection point when the circle of radius ``d2``
    around ``p`` does not reach the path ahead.
    """
    p = np.asarray(p, dtype=float)
    theta_p = _project(path, p, theta_min, config)
    grid = np.linspace(theta_p, path.theta_end, n_grid)
    dist = np.linalg.norm(path.eval(grid) - p, axis=1) - config.d2
    if dist[0] > 0:
        return _target(path, theta_p, config)
    idx = np.nonzero(dist >= 0)[0]
    if idx.size == 0:
        return _target(path, path.theta_end, config)
    i = int(idx[0])
    if dist[i] == 0:
        return _target(path, float(grid[i]), config)
    f = lambda th: float(np.linalg.norm(path.eval(th) - p) - config.d2)  # noqa: E731
    theta_t = brentq(f, grid[i - 1], grid[i], xtol=1e-13)
    return _target(path, float(theta_t), config)


class GuidanceTracker:
    """Stateful wrapper that keeps projections and targets moving forward."""

    def __init__(self, path: PathSpec, config: GuidanceConfig, law: str) -> None:
        if law not in ("carrot", "nlgl"):
            raise ValueError(f"unknown guidance law {law!r}")
        self.path = path
        self.config = config
        self.law = law
        self.theta_proj = path.theta0
        self.theta_target = path.theta0

    def __call__(self, p):
        self.theta_proj = _project(self.path, p, self.theta_proj, self.config)
        fn = carrot_target if self.law == "carrot" else nlgl_target
        x_d, a_d, theta = fn(self.path, p, self.config, theta_min=self.theta_proj)
        if theta < self.theta_target:
            x_d, a_d, theta = _target(self.path, self.theta_target, self.config)
        self.theta_target = theta
        return x_d, a_d, theta


def fflc_pseudo_control(a_d) -> np.ndarray:
    """Nominal feedforward linearization: no PD, no learning."""
    return np.asarray(a_d, dtype=float).copy()


def lb_fflc_pseudo_control(a_d, mu, e, k_c: float, gains: Gains) -> np.ndarray:
    """Feedforward plus the GP adaptive term, without PD feedback."""
    return np.asarray(a_d, dtype=float) + adaptive_term(mu, e, k_c, gains)


class TrackingMPC:
    """Same double-integrator model and weights as the MPFC, but the path
    parameter follows the clock, so the OCP is a single convex QP."""

    def __init__(self, path: PathSpec, config: OcpConfig, theta_vel: float = 1.0) -> None:
        self.path = path
        self.config = config
        self.theta_vel = theta_vel
        H = config.horizon
        A, B = discretize(config.dt)
        idx = [0, 1, 2, 3, 4, 5]
        self.Phi, self.Gam = _condense(A[np.ix_(idx, idx)], B[np.ix_(idx, [0, 1, 2])], H)
        Q = config.Q
        self.H = 2.0 * config.dt * (
            np.einsum("kil,ij,kjm->lm", self.Gam[1:], Q, self.Gam[1:]) + np.kron(np.eye(H), config.R)
        )
        n = 3 * H
        lo = np.tile(config.a_min, H)
        hi = np.tile(config.a_max, H)
        self.C = np.vstack([np.eye(n), -np.eye(n)])
        self.b = np.concatenate([lo, -hi])

    def clock_theta(self, t: float) -> np.ndarray:
        k = np.arange(self.config.horizon + 1)
        th = self.path.theta0 + self.theta_vel * (t + k * self.config.dt)
        return np.minimum(th, self.path.theta_end)

    def solve(self, x0, t: float) -> OcpSolution:
        cfg, H = self.config, self.config.horizon
        x0 = np.asarray(x0, dtype=float)
        theta = self.clock_theta(t)
        vel = np.where(theta < self.path.theta_end, self.theta_vel, 0.0)
        ref = np.hstack([self.path.eval(theta), self.path.eval_derivative(theta) * vel[:, None]])
        free = np.einsum("kij,j->ki", self.Phi, x0)
        g = 2.0 * cfg.dt * np.einsum("kil,ij,kj->l", self.Gam[1:], cfg.Q, free[1:] - ref[1:])
        res = solve_qp(self.H, g, self.C, self.b)
        A = res.x
        Z = free + np.einsum("kij,j->ki", self.Gam, A)
        sol = OcpSolution(
            states=Z, controls=A.reshape(H, 3), theta=theta, theta_vel=vel.astype(float),
            theta_acc=np.zeros(H), dt=cfg.dt, iterations=1, converged=True, n_active=len(res.active),
        )
        track = Z[1:] - ref[1:]
        sol.objective = float(cfg.dt * (np.einsum("ki,ij,kj->", track, cfg.Q, track)
                                        + np.einsum("ki,ij,kj->", sol.controls, cfg.R, sol.controls)))
        sol.objective_history = [sol.objective]
        return sol


def tracking_mpc_solve(x0, t_k: float, path: PathSpec, config: OcpConfig, theta_vel: float = 1.0) -> OcpSolution:
    return TrackingMPC(path, config, theta_vel).solve(x0, t_k)
