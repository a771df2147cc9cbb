"""Parametric geometric paths and closest-point queries.

Every path maps a scalar parameter ``theta`` to a position in R^3 and comes
with analytic first and second derivatives. All shapes are planar or
helical figures whose default scaling traverses the whole figure over
``theta in [0, 20]``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np
from scipy.optimize import minimize_scalar

KINDS = (
    "lemniscate",
    "parabola",
    "circle",
    "cylindrical_helix",
    "conical_spiral",
    "straight_line",
)

_DEFAULTS: dict[str, dict[str, Any]] = {
    "lemniscate": {"scale": 1.0, "altitude": 1.0, "period": 20.0},
    "parabola": {"width": 2.0, "height": 2.0, "altitude": 1.0},
    "circle": {"radius": 1.0, "altitude": 1.0, "period": 20.0, "center": [0.0, 0.0]},
    "cylindrical_helix": {"radius": 1.0, "pitch": 0.1, "altitude": 0.5, "turns": 2.0},
    "conical_spiral": {
        "radius": 0.2,
        "growth": 0.05,
        "climb": 0.05,
        "altitude": 0.5,
        "turns": 2.0,
    },
    "straight_line": {"origin": [0.0, 0.0, 0.0], "direction": [1.0, 0.0, 0.0], "speed": 1.0},
}


class PathDomainError(ValueError):
    """Raised when a path is evaluated outside its parameter range."""


@dataclass(frozen=True)
class PathSpec:
    """A parametric path ``P(theta)`` on ``theta_range``.

    ``params`` holds the per-kind shape scalars; missing entries fall back to
    the frozen defaults of that kind.
    """

    kind: str
    params: Mapping[str, Any] = field(default_factory=dict)
    theta_range: tuple[float, float] = (0.0, 20.0)

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown path kind {self.kind!r}; expected one of {KINDS}")
        lo, hi = (float(v) for v in self.theta_range)
        if not hi > lo:
            raise ValueError("theta_range must satisfy theta_end > theta_0")
        unknown = set(self.params) - set(_DEFAULTS[self.kind])
        if unknown:
            raise ValueError(f"unknown parameters for {self.kind}: {sorted(unknown)}")
        merged = {**_DEFAULTS[self.kind], **dict(self.params)}
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "theta_range", (lo, hi))
        if self.kind == "straight_line":
            d = np.asarray(merged["direction"], dtype=float)
            if np.linalg.norm(d) == 0.0:
                raise ValueError("straight_line direction must be non-zero")

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "PathSpec":
        data = dict(data)
        theta_range = tuple(data.pop("theta_range", (0.0, 20.0)))
        kind = data.pop("kind")
        return cls(kind=kind, params=data.pop("params", {}), theta_range=theta_range)

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": self.kind,
            "params": {k: (list(v) if isinstance(v, (list, tuple)) else v) for k, v in self.params.items()},
            "theta_range": list(self.theta_range),
        }

    @property
    def theta0(self) -> float:
        return self.theta_range[0]

    @property
    def theta_end(self) -> float:
        return self.theta_range[1]

    def _check(self, theta: np.ndarray) -> None:
        lo, hi = self.theta_range
        if np.any(theta < lo) or np.any(theta > hi) or not np.all(np.isfinite(theta)):
            raise PathDomainError(f"theta outside [{lo}, {hi}]")

    def eval(self, theta, strict: bool = True) -> np.ndarray:
        """Position ``P(theta)``; shape ``(3,)`` or ``(len(theta), 3)``."""
        return self._derivative(theta, 0, strict)

    def eval_derivative(self, theta, strict: bool = True) -> np.ndarray:
        """Tangent ``dP/dtheta``."""
        return self._derivative(theta, 1, strict)

    def eval_second_derivative(self, theta, strict: bool = True) -> np.ndarray:
        """Curvature vector ``d2P/dtheta2``."""
        return self._derivative(theta, 2, strict)

    def _derivative(self, theta, order: int, strict: bool) -> np.ndarray:
        th = np.asarray(theta, dtype=float)
        if strict:
            self._check(th)
        scalar = th.ndim == 0
        th = np.atleast_1d(th)
        out = _SHAPES[self.kind](self.params, th, order)
        return out[0] if scalar else out


def _trig(w: float, th: np.ndarray, order: int) -> tuple[np.ndarray, np.ndarray]:
    """Derivatives of (cos(w th), sin(w th)) of the given order."""
    c, s = np.cos(w * th), np.sin(w * th)
    if order == 0:
        return c, s
    if order == 1:
        return -w * s, w * c
    return -w * w * c, -w * w * s


def _lemniscate(p, th, order):
    # Gerono figure-eight: x = a sin(wt), y = a sin(wt) cos(wt) = (a/2) sin(2wt)
    a, w = p["scale"], 2.0 * np.pi / p["period"]
    out = np.zeros((th.size, 3))
    if order == 0:
        out[:, 0] = a * np.sin(w * th)
        out[:, 1] = 0.5 * a * np.sin(2 * w * th)
        out[:, 2] = p["altitude"]
    elif order == 1:
        out[:, 0] = a * w * np.cos(w * th)
        out[:, 1] = a * w * np.cos(2 * w * th)
    else:
        out[:, 0] = -a * w * w * np.sin(w * th)
        out[:, 1] = -2.0 * a * w * w * np.sin(2 * w * th)
    return out


def _parabola(p, th, order):
    # s = (theta - 10) / 10 sweeps [-1, 1] over [0, 20]
    s = (th - 10.0) / 10.0
    ds = 0.1
    out = np.zeros((th.size, 3))
    if order == 0:
        out[:, 0] = p["width"] * s
        out[:, 1] = p["height"] * s * s
        out[:, 2] = p["altitude"]
    elif order == 1:
        out[:, 0] = p["width"] * ds
        out[:, 1] = 2.0 * p["height"] * s * ds
    else:
        out[:, 1] = 2.0 * p["height"] * ds * ds
    return out


def _circle(p, th, order):
    r, w = p["radius"], 2.0 * np.pi / p["period"]
    c, s = _trig(w, th, order)
    out = np.zeros((th.size, 3))
    out[:, 0] = r * c
    out[:, 1] = r * s
    if order == 0:
        out[:, 0] += p["center"][0]
        out[:, 1] += p["center"][1]
        out[:, 2] = p["altitude"]
    return out


def _helix(p, th, order):
    r, w = p["radius"], 2.0 * np.pi * p["turns"] / 20.0
    c, s = _trig(w, th, order)
    out = np.zeros((th.size, 3))
    out[:, 0] = r * c
    out[:, 1] = r * s
    if order == 0:
        out[:, 2] = p["altitude"] + p["pitch"] * th
    elif order == 1:
        out[:, 2] = p["pitch"]
    return out


def _spiral(p, th, order):
    w = 2.0 * np.pi * p["turns"] / 20.0
    r = p["radius"] + p["growth"] * th
    dr = p["growth"]
    c0, s0 = _trig(w, th, 0)
    out = np.zeros((th.size, 3))
    if order == 0:
        out[:, 0] = r * c0
        out[:, 1] = r * s0
        out[:, 2] = p["altitude"] + p["climb"] * th
    elif order == 1:
        c1, s1 = _trig(w, th, 1)
        out[:, 0] = dr * c0 + r * c1
        out[:, 1] = dr * s0 + r * s1
        out[:, 2] = p["climb"]
    else:
        c1, s1 = _trig(w, th, 1)
        c2, s2 = _trig(w, th, 2)
        out[:, 0] = 2.0 * dr * c1 + r * c2
        out[:, 1] = 2.0 * dr * s1 + r * s2
    return out


def _line(p, th, order):
    d = np.asarray(p["direction"], dtype=float)
    d = p["speed"] * d / np.linalg.norm(d)
    if order == 0:
        return np.asarray(p["origin"], dtype=float) + th[:, None] * d
    if order == 1:
        return np.tile(d, (th.size, 1))
    return np.zeros((th.size, 3))


_SHAPES = {
    "lemniscate": _lemniscate,
    "parabola": _parabola,
    "circle": _circle,
    "cylindrical_helix": _helix,
    "conical_spiral": _spiral,
    "straight_line": _line,
}


@dataclass(frozen=True)
class ReferencePoint:
    position: np.ndarray
    velocity: np.ndarray

    @property
    def state(self) -> np.ndarray:
        return np.concatenate([self.position, self.velocity])


def reference_state(path: PathSpec, theta: float, theta_vel: float) -> ReferencePoint:
    """Reference position ``P(theta)`` and velocity ``P'(theta) * theta_vel``."""
    if theta_vel < 0:
        raise ValueError("theta_vel must be non-negative")
    return ReferencePoint(path.eval(theta), path.eval_derivative(theta) * theta_vel)


def min_distance(
    path: PathSpec,
    p,
    n_grid: int = 2000,
    theta_lo: float | None = None,
    theta_hi: float | None = None,
    xtol: float = 1e-10,
) -> tuple[float, float]:
    """Closest distance from ``p`` to the path and the minimizing ``theta``.

    A uniform grid over ``[theta_lo, theta_hi]`` (default: the full range)
    selects the best cell; ties go to the smallest ``theta``. The cell around
    the winner is then refined by bounded scalar minimization.
    """
    p = np.asarray(p, dtype=float)
    lo = path.theta0 if theta_lo is None else max(path.theta0, float(theta_lo))
    hi = path.theta_end if theta_hi is None else min(path.theta_end, float(theta_hi))
    if hi <= lo:
        theta = lo
        return float(np.linalg.norm(p - path.eval(theta))), theta
    grid, points = _grid_points(path, lo, hi, n_grid)
    d2 = np.sum((points - p) ** 2, axis=1)
    i = int(np.argmin(d2))
    a, b = grid[max(i - 1, 0)], grid[min(i + 1, n_grid - 1)]

    def f(th: float) -> float:
        q = path.eval(th, strict=False) - p
        return float(q @ q)

    res = minimize_scalar(f, bounds=(a, b), method="bounded", options={"xatol": xtol})
    if res.fun <= d2[i]:
        theta, best = float(res.x), float(res.fun)
    else:
        theta, best = float(grid[i]), float(d2[i])
    # Brent stops at ~sqrt(eps) relative accuracy in theta; polish with
    # safeguarded Newton steps on the stationarity condition (P - p) . P' = 0
    for _ in range(3):
        q = path.eval(theta, strict=False) - p
        t1 = path.eval_derivative(theta, strict=False)
        curv = t1 @ t1 + q @ path.eval_second_derivative(theta, strict=False)
        if curv <= 0:
            break
        cand = min(max(theta - (q @ t1) / curv, a), b)
        val = f(cand)
        if not val < best:
            break
        theta, best = float(cand), val
    return float(np.sqrt(best)), theta


_GRID_CACHE: dict[tuple, tuple[np.ndarray, np.ndarray]] = {}


def _grid_points(path: PathSpec, lo: float, hi: float, n: int) -> tuple[np.ndarray, np.ndarray]:
    key = (path.kind, json.dumps(path.params, sort_keys=True, default=list), path.theta_range, lo, hi, n)
    hit = _GRID_CACHE.get(key)
    if hit is None:
        if len(_GRID_CACHE) > 256:
            _GRID_CACHE.clear()
        grid = np.linspace(lo, hi, n)
        hit = _GRID_CACHE[key] = (grid, path.eval(grid))
    return hit


def arc_length(path: PathSpec, theta_a: float, theta_b: float, n: int = 2001) -> float:
    """Arc length between two parameters by composite Simpson quadrature."""
    if theta_b == theta_a:
        return 0.0
    n = n if n % 2 == 1 else n + 1
    th = np.linspace(theta_a, theta_b, n)
    speed = np.linalg.norm(path.eval_derivative(th, strict=False), axis=1)
    h = (theta_b - theta_a) / (n - 1)
    return float(h / 3.0 * (speed[0] + speed[-1] + 4 * speed[1:-1:2].sum() + 2 * speed[2:-1:2].sum()))
