"""Dense strictly convex QP solver (Goldfarb-Idnani dual active set).

Solves ``min 1/2 x^T H x + g^T x  s.t.  C x >= b`` for positive definite
``H``. The method starts from the unconstrained minimizer and adds the
most violated constraint until the primal iterate is feasible, so no
feasible starting point is required.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular


class QPInfeasible(RuntimeError):
    pass


@dataclass
class QPResult:
    x: np.ndarray
    active: list[int]
    multipliers: np.ndarray
    iterations: int


def solve_qp(H, g, C=None, b=None, tol: float = 1e-10, max_iter: int = 1000) -> QPResult:
    H = np.asarray(H, dtype=float)
    g = np.asarray(g, dtype=float)
    n = g.size
    if C is None or len(C) == 0:
        x = -np.linalg.solve(H, g)
        return QPResult(x, [], np.zeros(0), 0)
    C = np.asarray(C, dtype=float)
    b = np.asarray(b, dtype=float)
    L = np.linalg.cholesky(H)
    Linv = solve_triangular(L, np.eye(n), lower=True)
    x = -(Linv.T @ (Linv @ g))
    scale = np.maximum(np.linalg.norm(C, axis=1), 1.0)

    active: list[int] = []
    u = np.zeros(0)
    J = Linv.T.copy()
    R = np.zeros((0, 0))

    def refactor():
        if not active:
            return Linv.T.copy(), np.zeros((0, 0))
        N = C[active].T
        Q, Rf = np.linalg.qr(Linv @ N, mode="complete")
        return Linv.T @ Q, Rf[: len(active), :]

    it = 0
    while True:
        s = (C @ x - b) / scale
        s[active] = 0.0
        p = int(np.argmin(s))
        if s[p] >= -tol:
            return QPResult(x, list(active), u, it)
        n_p = C[p]
        u_plus = np.append(u, 0.0)
        while True:
            it += 1
            if it > max_iter:
                raise QPInfeasible("active-set iteration limit reached")
            q = len(active)
            d = J.T @ n_p
            z = J[:, q:] @ d[q:]
            r = solve_triangular(R, d[:q]) if q else np.zeros(0)
            # dual (partial) step: keep active multipliers non-negative
            t1, l = np.inf, -1
            for j in range(q):
                if r[j] > tol and u_plus[j] / r[j] < t1:
                    t1, l = u_plus[j] / r[j], j
            zn = float(z @ n_p)
            t2 = np.inf if abs(zn) <= 1e-14 * max(1.0, float(n_p @ n_p)) else -(n_p @ x - b[p]) / zn
            t = min(t1, t2)
            if not np.isfinite(t):
                raise QPInfeasible("constraints are inconsistent")
            if t2 == np.inf:
                u_plus[:q] -= t * r
                u_plus[q] += t
                active.pop(l)
                u_plus = np.delete(u_plus, l)
                J, R = refactor()
                continue
            x = x + t * z
            u_plus[:q] -= t * r
            u_plus[q] += t
            if t == t2:
                active.append(p)
                u = u_plus
                J, R = refactor()
                break
            active.pop(l)
            u_plus = np.delete(u_plus, l)
            J, R = refactor()
