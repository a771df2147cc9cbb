"""Translational quadrotor plant with thrust and drag, plus the flatness
based conversion from a world-frame force to attitude/thrust commands."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .wind import WindModel

E3 = np.array([0.0, 0.0, 1.0])


class IntegrationFault(RuntimeError):
    """The plant state became non-finite."""


class DegenerateThrust(ValueError):
    pass


@dataclass(frozen=True)
class QuadParams:
    mass: float = 0.036
    g: float = 9.81
    k_drag: tuple[float, float, float] = (0.02, 0.02, 0.02)
    accel_limit: tuple[float, float, float] = (2.0, 2.0, 2.0)
    u_min: np.ndarray = field(default=None, repr=False, compare=False)
    u_max: np.ndarray = field(default=None, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.mass <= 0:
            raise ValueError("mass must be positive")
        lim = np.asarray(self.accel_limit, dtype=float)
        hover = self.mass * self.g * E3
        u_min = self.mass * (-lim + self.g * E3) if self.u_min is None else np.asarray(self.u_min, float)
        u_max = self.mass * (lim + self.g * E3) if self.u_max is None else np.asarray(self.u_max, float)
        if not np.all(u_min < u_max):
            raise ValueError("u_min must be below u_max componentwise")
        if not (np.all(u_min < hover) and np.all(hover < u_max)):
            raise ValueError("hover force must lie strictly inside the input box")
        object.__setattr__(self, "k_drag", tuple(float(k) for k in self.k_drag))
        object.__setattr__(self, "u_min", u_min)
        object.__setattr__(self, "u_max", u_max)

    @property
    def hover_force(self) -> np.ndarray:
        return self.mass * self.g * E3

    def saturate(self, u) -> np.ndarray:
        return np.clip(u, self.u_min, self.u_max)


@dataclass(frozen=True)
class PlantState:
    p: np.ndarray
    v: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float).reshape(3))
        object.__setattr__(self, "v", np.asarray(self.v, dtype=float).reshape(3))
        if not (np.all(np.isfinite(self.p)) and np.all(np.isfinite(self.v))):
            raise IntegrationFault("non-finite plant state")

    @property
    def x(self) -> np.ndarray:
        return np.concatenate([self.p, self.v])

    @classmethod
    def from_vector(cls, x) -> "PlantState":
        x = np.asarray(x, dtype=float)
        return cls(x[:3], x[3:6])


@dataclass(frozen=True)
class AttitudeCommand:
    thrust: float
    roll: float
    pitch: float
    yaw: float


def rotation_matrix(phi: float, theta: float, psi: float) -> np.ndarray:
    """Body-to-world rotation, ZYX Euler convention."""
    cf, sf = np.cos(phi), np.sin(phi)
    ct, st = np.cos(theta), np.sin(theta)
    cp, sp = np.cos(psi), np.sin(psi)
    return np.array(
        [
            [ct * cp, sf * st * cp - cf * sp, cf * st * cp + sf * sp],
            [ct * sp, sf * st * sp + cf * cp, cf * st * sp - sf * cp],
            [-st, sf * ct, cf * ct],
        ]
    )


def translational_derivative(state: PlantState, u, f_a, params: QuadParams) -> tuple[np.ndarray, np.ndarray]:
    """``(p_dot, v_dot)`` for world-frame rotor force ``u`` and drag ``f_a``."""
    v_dot = -params.g * E3 + (np.asarray(u) + np.asarray(f_a)) / params.mass
    return state.v.copy(), v_dot


def attitude_commands(u, a, psi_cmd: float = 0.0, g: float = 9.81) -> AttitudeCommand:
    """Thrust and roll/pitch commands realising force ``u`` and pseudo-accel ``a``."""
    u = np.asarray(u, dtype=float)
    thrust = float(np.linalg.norm(u))
    if thrust == 0.0:
        raise DegenerateThrust("zero thrust has no attitude")
    ax, ay, az = a
    beta_a = -ax * np.cos(psi_cmd) - ay * np.sin(psi_cmd)
    beta_b = -az + g
    beta_c = -ax * np.sin(psi_cmd) + ay * np.cos(psi_cmd)
    pitch = float(np.arctan2(beta_a, beta_b))
    roll = float(np.arctan2(beta_c, np.hypot(beta_a, beta_b)))
    return AttitudeCommand(thrust, roll, pitch, psi_cmd)


def _accel(v: np.ndarray, force: np.ndarray, v_w: np.ndarray, params: QuadParams, k: np.ndarray) -> np.ndarray:
    return -params.g * E3 + (force + k * (v_w - v)) / params.mass


def _rk4(p, v, u, vw, h, n_sub, params, k):
    for j in range(n_sub):
        w0, wm, w1 = vw[2 * j], vw[2 * j + 1], vw[2 * j + 2]
        k1p, k1v = v, _accel(v, u, w0, params, k)
        k2p = v + 0.5 * h * k1v
        k2v = _accel(k2p, u, wm, params, k)
        k3p = v + 0.5 * h * k2v
        k3v = _accel(k3p, u, wm, params, k)
        k4p = v + h * k3v
        k4v = _accel(k4p, u, w1, params, k)
        p = p + h / 6.0 * (k1p + 2 * k2p + 2 * k3p + k4p)
        v = v + h / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return p, v


def step(
    state: PlantState,
    u,
    wind: WindModel,
    t: float,
    dt_sub: float,
    n_sub: int,
    params: QuadParams,
) -> PlantState:
    """Advance ``n_sub`` classical RK4 substeps with zero-order-hold ``u``.

    The wind is sampled at every stage time.
    """
    if dt_sub <= 0 or n_sub < 1:
        raise ValueError("need dt_sub > 0 and n_sub >= 1")
    u = np.asarray(u, dtype=float)
    k = np.asarray(params.k_drag)
    # stage times t0, t0 + h/2, t0 + h for every substep in one vectorized call
    times = t + dt_sub * np.arange(0, 2 * n_sub + 1) / 2.0
    vw = wind.velocity(times)
    p, v = state.p.copy(), state.v.copy()
    h = dt_sub
    # non-finite values are caught below and reported as an IntegrationFault
    with np.errstate(invalid="ignore", over="ignore"):
        p, v = _rk4(p, v, u, vw, h, n_sub, params, k)
    if not (np.all(np.isfinite(p)) and np.all(np.isfinite(v))):
        raise IntegrationFault(f"non-finite state at t={t + n_sub * dt_sub:.3f}")
    return PlantState(p, v)


def acceleration(state: PlantState, u, v_w, params: QuadParams) -> np.ndarray:
    """True ``v_dot`` at ``state`` under force ``u`` and wind ``v_w``."""
    return _accel(state.v, np.asarray(u, float), np.asarray(v_w, float), params, np.asarray(params.k_drag))


class FirstOrderLag:
    """Optional actuator lag: the applied force relaxes toward the command
    with time constant ``tau``; exact discretisation per control period."""

    def __init__(self, tau: float, initial) -> None:
        self.tau = float(tau)
        self.force = np.asarray(initial, dtype=float).copy()

    def __call__(self, u, period: float) -> np.ndarray:
        if self.tau <= 0:
            self.force = np.asarray(u, dtype=float).copy()
        else:
            self.force = self.force + (1.0 - np.exp(-period / self.tau)) * (np.asarray(u) - self.force)
        return self.force
