"""Model predictive path-following control (high-level planner).

The predictive model is the double integrator ``x1' = x2, x2' = a`` stacked
with the virtual path dynamics ``theta' = theta_vel, theta_vel' = theta_acc``.
The model is linear and discretised exactly; the only nonlinearity is the
path ``P(theta)`` inside the tracking cost, handled by Gauss-Newton SQP on
the condensed problem.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

from .paths import PathSpec
from .qp import QPInfeasible, solve_qp

NX, NU = 8, 4  # (p, v, theta, theta_vel), (a, theta_acc)


def _mat(value, n: int) -> np.ndarray:
    m = np.asarray(value, dtype=float)
    return np.diag(m) if m.ndim == 1 else m.reshape(n, n)


@dataclass(frozen=True)
class OcpConfig:
    horizon: int = 20
    dt: float = 0.1
    q_mpc: Any = (10.0, 10.0, 10.0, 1.0, 1.0, 1.0)
    r_a: Any = (0.1, 0.1, 0.1)
    r_theta: float = 0.1
    a_min: tuple[float, float, float] = (-2.0, -2.0, -2.0)
    a_max: tuple[float, float, float] = (2.0, 2.0, 2.0)
    theta_acc_min: float = -5.0
    theta_acc_max: float = 5.0
    eps_theta: float = 1e-3
    x_min: tuple[float, ...] = (-np.inf,) * 6
    x_max: tuple[float, ...] = (np.inf,) * 6
    max_iter: int = 20
    tol: float = 1e-8
    ls_contraction: float = 0.5
    ls_max: int = 30

    def __post_init__(self) -> None:
        if self.horizon < 1 or self.dt <= 0 or self.eps_theta <= 0 or self.r_theta <= 0:
            raise ValueError("need horizon >= 1, dt > 0, eps_theta > 0, r_theta > 0")
        if np.min(np.linalg.eigvalsh(self.Q)) < -1e-12:
            raise ValueError("q_mpc must be positive semidefinite")
        if np.min(np.linalg.eigvalsh(self.R)) <= 0:
            raise ValueError("r_a must be positive definite")

    @property
    def Q(self) -> np.ndarray:
        return _mat(self.q_mpc, 6)

    @property
    def R(self) -> np.ndarray:
        return _mat(self.r_a, 3)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "OcpConfig":
        kw = {}
        for k, v in data.items():
            if k in ("x_min", "x_max", "a_min", "a_max"):
                v = tuple(float(s) for s in v)
            kw[k] = v
        return cls(**kw)


@dataclass
class OcpSolution:
    states: np.ndarray  # (H+1, 6)
    controls: np.ndarray  # (H, 3)
    theta: np.ndarray  # (H+1,)
    theta_vel: np.ndarray  # (H+1,)
    theta_acc: np.ndarray  # (H,)
    dt: float
    objective: float = np.nan
    iterations: int = 0
    converged: bool = True
    objective_history: list[float] = field(default_factory=list)
    n_active: int = 0

    @property
    def horizon(self) -> int:
        return self.controls.shape[0]

    def inputs(self) -> np.ndarray:
        return np.hstack([self.controls, self.theta_acc[:, None]]).ravel()


def discretize(dt: float) -> tuple[np.ndarray, np.ndarray]:
    """Exact zero-order-hold map of the 4 stacked double integrators."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    a = np.array([[1.0, dt], [0.0, 1.0]])
    bb = np.array([[0.5 * dt * dt], [dt]])
    A = np.zeros((NX, NX))
    B = np.zeros((NX, NU))
    # positions 0..2 with velocities 3..5; theta 6 with theta_vel 7
    for i, (ip, iv) in enumerate([(0, 3), (1, 4), (2, 5), (6, 7)]):
        A[np.ix_([ip, iv], [ip, iv])] = a
        B[[ip, iv], i] = bb[:, 0]
    return A, B


def _condense(A: np.ndarray, B: np.ndarray, H: int) -> tuple[np.ndarray, np.ndarray]:
    nx, nu = B.shape
    Phi = np.zeros((H + 1, nx, nx))
    Gam = np.zeros((H + 1, nx, nu * H))
    Phi[0] = np.eye(nx)
    for k in range(H):
        Phi[k + 1] = A @ Phi[k]
        Gam[k + 1] = A @ Gam[k]
        Gam[k + 1][:, k * nu:(k + 1) * nu] = B
    return Phi, Gam


def path_residual(states, theta, theta_vel, path: PathSpec) -> np.ndarray:
    """Stacked ``[p - P(theta); v - P'(theta) theta_vel]`` per node."""
    P = path.eval(theta, strict=False)
    dP = path.eval_derivative(theta, strict=False)
    return np.hstack([states[:, :3] - P, states[:, 3:6] - dP * np.asarray(theta_vel)[:, None]])


def objective(solution: OcpSolution, path: PathSpec, config: OcpConfig) -> float:
    """Discretised cost: tracking at nodes ``1..H``, effort at ``0..H-1``, times ``dt``."""
    res = path_residual(solution.states[1:], solution.theta[1:], solution.theta_vel[1:], path)
    track = np.einsum("ki,ij,kj->", res, config.Q, res)
    effort = np.einsum("ki,ij,kj->", solution.controls, config.R, solution.controls)
    effort += config.r_theta * float(solution.theta_acc @ solution.theta_acc)
    return float(config.dt * (track + effort))


class MPFCSolver:
    """Gauss-Newton SQP for the path-following OCP on a fixed path."""

    def __init__(self, path: PathSpec, config: OcpConfig) -> None:
        self.path = path
        self.config = config
        H = config.horizon
        self.A, self.B = discretize(config.dt)
        self.Phi, self.Gam = _condense(self.A, self.B, H)
        R = np.zeros((NU, NU))
        R[:3, :3] = config.R
        R[3, 3] = config.r_theta
        self.Rbig = np.kron(np.eye(H), R)
        self.w_lo = np.tile(np.r_[config.a_min, config.theta_acc_min], H)
        self.w_hi = np.tile(np.r_[config.a_max, config.theta_acc_max], H)
        self.G_theta = self.Gam[1:, 6, :]
        self.G_vel = self.Gam[1:, 7, :]
        xmin, xmax = np.asarray(config.x_min, float), np.asarray(config.x_max, float)
        rows, lo, hi = [], [], []
        for i in range(6):
            if np.isfinite(xmin[i]) or np.isfinite(xmax[i]):
                rows.append(self.Gam[1:, i, :])
                lo.append(np.full(H, xmin[i]))
                hi.append(np.full(H, xmax[i]))
        self._xrows = (np.vstack(rows), np.concatenate(lo), np.concatenate(hi)) if rows else None

    def _trajectory(self, z0: np.ndarray, W: np.ndarray) -> np.ndarray:
        return np.einsum("kij,j->ki", self.Phi, z0) + np.einsum("kij,j->ki", self.Gam, W)

    def _cost(self, Z: np.ndarray, W: np.ndarray) -> float:
        res = path_residual(Z[1:, :6], Z[1:, 6], Z[1:, 7], self.path)
        return float(self.config.dt * (np.einsum("ki,ij,kj->", res, self.config.Q, res) + W @ self.Rbig @ W))

    def _theta_bounds(self, theta0: float, vel0: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Per-node theta upper bounds and theta_vel lower bounds, relaxed
        only where the path end or the minimum speed cannot be honoured
        from the current path state."""
        cfg, H, dt = self.config, self.config.horizon, self.config.dt
        th, v = theta0, vel0
        th_min = np.empty(H)
        v_max = vel0 + cfg.theta_acc_max * dt * np.arange(1, H + 1)
        for k in range(H):
            acc = min(max(cfg.theta_acc_min, (cfg.eps_theta - v) / dt), cfg.theta_acc_max)
            th, v = th + v * dt + 0.5 * acc * dt * dt, v + acc * dt
            th_min[k] = th
        hi = np.maximum(self.path.theta_end, th_min)
        lo = np.full(H, min(self.path.theta0, theta0))
        vel_lo = np.minimum(cfg.eps_theta, v_max)
        return lo, hi, vel_lo

    def _constraints(self, Z, W, bounds):
        th_lo, th_hi, vel_lo = bounds
        blocks = [
            (np.eye(W.size), self.w_lo - W),
            (-np.eye(W.size), W - self.w_hi),
            (self.G_theta, th_lo - Z[1:, 6]),
            (-self.G_theta, Z[1:, 6] - th_hi),
            (self.G_vel, vel_lo - Z[1:, 7]),
        ]
        if self._xrows is not None:
            G, lo, hi = self._xrows
            cur = self._state_rows_value(Z)
            ok_lo, ok_hi = np.isfinite(lo), np.isfinite(hi)
            blocks.append((G[ok_lo], lo[ok_lo] - cur[ok_lo]))
            blocks.append((-G[ok_hi], cur[ok_hi] - hi[ok_hi]))
        C = np.vstack([b[0] for b in blocks])
        b = np.concatenate([b[1] for b in blocks])
        return C, b

    def _state_rows_value(self, Z) -> np.ndarray:
        xmin, xmax = np.asarray(self.config.x_min, float), np.asarray(self.config.x_max, float)
        vals = [Z[1:, i] for i in range(6) if np.isfinite(xmin[i]) or np.isfinite(xmax[i])]  # row order of _xrows
        return np.concatenate(vals)

    def _gn_qp(self, Z, W):
        cfg, H = self.config, self.config.horizon
        th, vel = Z[1:, 6], Z[1:, 7]
        res = path_residual(Z[1:, :6], th, vel, self.path)
        dP = self.path.eval_derivative(th, strict=False)
        ddP = self.path.eval_second_derivative(th, strict=False)
        Jr = np.zeros((H, 6, NX))
        Jr[:, :, :6] = np.eye(6)
        Jr[:, :3, 6] = -dP
        Jr[:, 3:, 6] = -ddP * vel[:, None]
        Jr[:, 3:, 7] = -dP
        M = np.einsum("kij,kjl->kil", Jr, self.Gam[1:])  # (H, 6, nW)
        QM = np.einsum("ij,kjl->kil", cfg.Q, M)
        Hgn = 2.0 * cfg.dt * (np.einsum("kil,kim->lm", M, QM) + self.Rbig)
        grad = 2.0 * cfg.dt * (np.einsum("kil,ki->l", QM, res) + self.Rbig @ W)
        return 0.5 * (Hgn + Hgn.T), grad

    def solve(self, x0, theta0: float, theta_vel0: float, warm: OcpSolution | None = None) -> OcpSolution:
        cfg, H = self.config, self.config.horizon
        x0 = np.asarray(x0, dtype=float)
        if not np.all(np.isfinite(x0)):
            raise ValueError("non-finite initial state")
        if not self.path.theta0 <= theta0 <= self.path.theta_end + cfg.eps_theta * cfg.dt * H * 10:
            raise ValueError("theta0 outside the path range")
        z0 = np.r_[x0, theta0, theta_vel0]
        W = shift_inputs(warm) if warm is not None and warm.horizon == H else np.zeros(NU * H)
        bounds = self._theta_bounds(theta0, theta_vel0)
        Phi_z0 = np.einsum("kij,j->ki", self.Phi, z0)

        def traj(Wv):
            return Phi_z0 + np.einsum("kij,j->ki", self.Gam, Wv)

        Z = traj(W)
        J = self._cost(Z, W)
        history = [J]
        iterations, converged, n_active = 0, False, 0
        for _ in range(cfg.max_iter):
            Hgn, grad = self._gn_qp(Z, W)
            C, b = self._constraints(Z, W, bounds)
            feasible = bool(np.all(b <= 1e-9))
            try:
                qp = solve_qp(Hgn, grad, C, b)
            except QPInfeasible as exc:
                raise QPInfeasible(f"OCP subproblem infeasible at theta0={theta0:.4f}") from exc
            n_active = len(qp.active)
            step = qp.x
            if np.max(np.abs(step)) <= cfg.tol:
                converged = True
                break
            alpha, accepted = 1.0, False
            for _ in range(cfg.ls_max):
                W_new = W + alpha * step
                Z_new = traj(W_new)
                J_new = self._cost(Z_new, W_new)
                if not feasible or J_new <= J:
                    accepted = True
                    break
                alpha *= cfg.ls_contraction
            if not accepted:
                converged = bool(np.max(np.abs(step)) <= 1e3 * cfg.tol)
                break
            W, Z, J = W_new, Z_new, J_new
            history.append(J)
            iterations += 1
            if alpha * np.max(np.abs(step)) <= cfg.tol:
                converged = True
                break
        U = W.reshape(H, NU)
        return OcpSolution(
            states=Z[:, :6].copy(), controls=U[:, :3].copy(), theta=Z[:, 6].copy(), theta_vel=Z[:, 7].copy(),
            theta_acc=U[:, 3].copy(), dt=cfg.dt, objective=J, iterations=iterations, converged=converged,
            objective_history=history, n_active=n_active,
        )


def shift_inputs(solution: OcpSolution) -> np.ndarray:
    """Warm start: drop the first input and repeat the last."""
    U = solution.inputs().reshape(solution.horizon, NU)
    return np.vstack([U[1:], U[-1:]]).ravel()


def solve(x0, theta0: float, theta_vel0: float, path: PathSpec, config: OcpConfig,
          warm: OcpSolution | None = None) -> OcpSolution:
    return MPFCSolver(path, config).solve(x0, theta0, theta_vel0, warm)


def reference_for_period(solution: OcpSolution, tau: float) -> tuple[np.ndarray, np.ndarray]:
    """Reference state and feedforward at ``tau`` into the first interval.

    Uses the exact double-integrator flow under the first planned input, so
    the reference satisfies ``x1d' = x2d`` and ``x2d' = a_d``.
    """
    x0 = solution.states[0]
    a0 = solution.controls[0]
    p = x0[:3] + x0[3:] * tau + 0.5 * a0 * tau * tau
    v = x0[3:] + a0 * tau
    return np.concatenate([p, v]), a0.copy()


def path_state_at(solution: OcpSolution, tau: float) -> tuple[float, float]:
    th0, v0, acc = solution.theta[0], solution.theta_vel[0], solution.theta_acc[0]
    return float(th0 + v0 * tau + 0.5 * acc * tau * tau), float(v0 + acc * tau)
