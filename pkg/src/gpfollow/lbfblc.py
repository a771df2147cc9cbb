"""Learning-based feedback linearization (low-level tracking controller).

The pseudo-control is PD feedback plus feedforward plus an adaptive term
``r = -mu - k_c B^T P e`` that cancels the GP disturbance estimate and adds
a robustifying gain ``k_c`` chosen by a small CLF-QP.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_continuous_lyapunov

from .gp import GPModel, confidence_radius
from .quadrotor import E3, QuadParams


class GainConfigurationError(ValueError):
    """PD gains do not make the error dynamics Hurwitz."""


class LinearizationError(np.linalg.LinAlgError):
    pass


def error_matrices(kp, kd) -> tuple[np.ndarray, np.ndarray]:
    """Closed-loop ``A = [[0, I], [-Kp, -Kd]]`` and input ``B = [0; I]``."""
    kp = np.diag(np.asarray(kp, dtype=float)) if np.ndim(kp) == 1 else np.asarray(kp, dtype=float)
    kd = np.diag(np.asarray(kd, dtype=float)) if np.ndim(kd) == 1 else np.asarray(kd, dtype=float)
    n = kp.shape[0]
    A = np.block([[np.zeros((n, n)), np.eye(n)], [-kp, -kd]])
    B = np.vstack([np.zeros((n, n)), np.eye(n)])
    return A, B


def solve_lyapunov(kp, kd, Q) -> np.ndarray:
    """Unique SPD ``P`` with ``A^T P + P A = -Q``."""
    A, _ = error_matrices(kp, kd)
    if np.max(np.linalg.eigvals(A).real) >= 0:
        raise GainConfigurationError("A is not Hurwitz for the given Kp, Kd")
    P = solve_continuous_lyapunov(A.T, -np.asarray(Q, dtype=float))
    return 0.5 * (P + P.T)


@dataclass(frozen=True)
class Gains:
    kp: np.ndarray
    kd: np.ndarray
    Q: np.ndarray
    P: np.ndarray
    A: np.ndarray
    B: np.ndarray
    k_eps: float = 1e20

    @classmethod
    def build(cls, kp=(2.0, 2.0, 2.0), kd=(1.0, 1.0, 1.0), Q=None, k_eps: float = 1e20) -> "Gains":
        kp = np.asarray(kp, dtype=float)
        kd = np.asarray(kd, dtype=float)
        Q = np.eye(2 * kp.size) if Q is None else np.asarray(Q, dtype=float)
        if Q.ndim == 1:
            Q = np.diag(Q)
        A, B = error_matrices(kp, kd)
        P = solve_lyapunov(kp, kd, Q)
        return cls(kp, kd, Q, P, A, B, float(k_eps))


@dataclass(frozen=True)
class ControlOutput:
    u: np.ndarray
    u_raw: np.ndarray
    a: np.ndarray
    r: np.ndarray
    k_c: float
    slack: float
    V: float
    margin: float
    mu: np.ndarray
    sigma: np.ndarray

    @property
    def saturated(self) -> bool:
        return not np.array_equal(self.u, self.u_raw)


def pseudo_control(x_d, a_d, x, r, gains: Gains) -> np.ndarray:
    """``a = a_d + Kp (x1d - x1) + Kd (x2d - x2) + r``."""
    x_d, x = np.asarray(x_d, float), np.asarray(x, float)
    return np.asarray(a_d) + gains.kp * (x_d[:3] - x[:3]) + gains.kd * (x_d[3:] - x[3:]) + np.asarray(r)


def adaptive_term(mu, e, k_c: float, gains: Gains) -> np.ndarray:
    """``r = -mu - k_c B^T P e``."""
    if k_c < 0:
        raise ValueError("k_c must be non-negative")
    return -np.asarray(mu, float) - k_c * (gains.B.T @ gains.P @ np.asarray(e, float))


def feedback_linearize(a, f_hat, G) -> np.ndarray:
    """``u = G^{-1} (a - f_hat)``."""
    try:
        return np.linalg.solve(np.asarray(G, float), np.asarray(a, float) - np.asarray(f_hat, float))
    except np.linalg.LinAlgError as exc:
        raise LinearizationError("input matrix G is singular") from exc


def nominal_model(params: QuadParams) -> tuple[np.ndarray, np.ndarray]:
    """Nominal drift and input matrix of the quadrotor: ``-g e3`` and ``I/m``."""
    return -params.g * E3, np.eye(3) / params.mass


@dataclass(frozen=True)
class KcQP:
    """Data of the scalar CLF-QP in ``(k_c, eps)``.

    minimize ``|w|^2 k^2 + k_eps eps^2`` s.t. ``-2|w|^2 k + b_clf <= eps``,
    ``lower <= u0 - k g <= upper`` and ``k >= 0``.
    """

    w: np.ndarray
    b_clf: float
    u0: np.ndarray
    g: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k_eps: float

    @property
    def ww(self) -> float:
        return float(self.w @ self.w)

    def objective(self, k: float, eps: float) -> float:
        return self.ww * k * k + self.k_eps * eps * eps

    def rows(self) -> tuple[np.ndarray, np.ndarray]:
        """All inequality rows as ``M @ (k, eps) <= h``."""
        M = [[-2.0 * self.ww, -1.0]]
        h = [-self.b_clf]
        for i in range(self.g.size):
            M.append([self.g[i], 0.0])  # u_i >= lower_i
            h.append(self.u0[i] - self.lower[i])
            M.append([-self.g[i], 0.0])  # u_i <= upper_i
            h.append(self.upper[i] - self.u0[i])
        M.append([-1.0, 0.0])
        h.append(0.0)
        return np.array(M), np.array(h)


def build_kc_qp(e, mu, sigma, x_d, a_d, x, f_hat, G, gains: Gains, u_min, u_max, beta: float,
                feedback: bool = True) -> KcQP:
    e = np.asarray(e, float)
    w = gains.B.T @ gains.P @ e
    nw = float(np.linalg.norm(w))
    b_clf = float(-e @ gains.Q @ e + 2.0 * nw * confidence_radius(sigma, beta))
    a_pd = pseudo_control(x_d, np.zeros(3), x, np.zeros(3), gains) if feedback else np.zeros(3)
    Ginv = np.linalg.inv(np.asarray(G, float))
    u0 = Ginv @ (np.asarray(a_d) + a_pd - np.asarray(mu) - np.asarray(f_hat))
    return KcQP(w, b_clf, u0, Ginv @ w, np.asarray(u_min, float), np.asarray(u_max, float), gains.k_eps)


def solve_kc(qp: KcQP) -> tuple[float, float]:
    """Exact minimizer of the scalar CLF-QP.

    With ``eps`` eliminated, the objective is a convex piecewise quadratic in
    ``k``, so the constrained minimizer is the clamp of the free one onto
    the interval allowed by the control rows and ``k >= 0``. If the control
    rows admit no ``k``, they are dropped and saturation enforces the box.
    """
    ww, b, k_eps = qp.ww, qp.b_clf, qp.k_eps
    if ww == 0.0:
        return 0.0, max(0.0, b)
    c = 2.0 * ww
    k_free = 0.0 if b <= 0 else c * b / (ww / k_eps + c * c)
    lo, hi = 0.0, np.inf
    feasible = True
    for gi, u0i, lmin, lmax in zip(qp.g, qp.u0, qp.lower, qp.upper):
        if gi > 0:
            lo = max(lo, (u0i - lmax) / gi)
            hi = min(hi, (u0i - lmin) / gi)
        elif gi < 0:
            lo = max(lo, (u0i - lmin) / gi)
            hi = min(hi, (u0i - lmax) / gi)
        elif not lmin <= u0i <= lmax:
            feasible = False
    k = float(np.clip(k_free, lo, hi)) if feasible and lo <= hi else k_free
    return k, max(0.0, b - c * k)


def solve_kc_qp(e, mu, sigma, x_d, a_d, x, f_hat, G, gains: Gains, u_min, u_max, beta: float,
                feedback: bool = True) -> tuple[float, float]:
    return solve_kc(build_kc_qp(e, mu, sigma, x_d, a_d, x, f_hat, G, gains, u_min, u_max, beta, feedback))


def control_step(
    x,
    x_d,
    a_d,
    gp: GPModel | None,
    gains: Gains,
    params: QuadParams,
    beta: float = 3.0,
    feedback: bool = True,
    learning: bool = True,
) -> ControlOutput:
    """One evaluation of the low-level controller.

    ``feedback=False`` drops the PD terms (feedforward linearization);
    ``learning=False`` drops the adaptive term entirely (nominal model).
    """
    x, x_d, a_d = np.asarray(x, float), np.asarray(x_d, float), np.asarray(a_d, float)
    if not (np.all(np.isfinite(x_d)) and np.all(np.isfinite(a_d))):
        raise ValueError("non-finite reference")
    e = x - x_d
    f_hat, G = nominal_model(params)
    if learning and gp is not None:
        mu, sigma = gp.predict(x)
        k_c, slack = solve_kc_qp(e, mu, sigma, x_d, a_d, x, f_hat, G, gains, params.u_min, params.u_max,
                                 beta, feedback)
        r = adaptive_term(mu, e, k_c, gains)
    else:
        mu, sigma = np.zeros(3), np.zeros(3)
        k_c, slack, r = 0.0, 0.0, np.zeros(3)
    if feedback:
        a = pseudo_control(x_d, a_d, x, r, gains)
    else:
        a = a_d + r
    u_raw = feedback_linearize(a, f_hat, G)
    u = params.saturate(u_raw)
    w = gains.B.T @ gains.P @ e
    margin = k_c * float(np.linalg.norm(w)) - confidence_radius(sigma, beta)
    return ControlOutput(
        u=u, u_raw=u_raw, a=a, r=r, k_c=k_c, slack=slack, V=float(e @ gains.P @ e), margin=margin,
        mu=np.asarray(mu), sigma=np.asarray(sigma),
    )
