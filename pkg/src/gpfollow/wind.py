"""Wind disturbance: constant + von Karman turbulence + 1-cos gust.

Turbulence is synthesized as a seeded sum of cosines (spectral
representation) whose amplitudes follow the MIL-F-8785C von Karman
spectra, so a model is a deterministic function of time.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

FT = 0.3048


def von_karman_psd(omega, sigma: float, length: float, airspeed: float, axis: str) -> np.ndarray:
    """One-sided von Karman PSD in temporal frequency ``omega`` [rad/s].

    Integrates to ``sigma**2`` over ``omega in [0, inf)``.
    """
    big_omega = np.asarray(omega, dtype=float) / airspeed
    x = (1.339 * length * big_omega) ** 2
    if axis == "u":
        phi = sigma**2 * (2.0 * length / np.pi) / (1.0 + x) ** (5.0 / 6.0)
    else:
        phi = sigma**2 * (length / np.pi) * (1.0 + (8.0 / 3.0) * x) / (1.0 + x) ** (11.0 / 6.0)
    return phi / airspeed


def low_altitude_parameters(altitude: float, w20: float) -> tuple[np.ndarray, np.ndarray]:
    """MIL-F-8785C low-altitude intensities and scales (SI units).

    Returns ``(sigma_uvw, length_uvw)`` for altitude [m] and the wind speed
    at 20 ft ``w20`` [m/s].
    """
    if altitude <= 0:
        raise ValueError("altitude must be positive")
    h = altitude / FT
    sigma_w = 0.1 * w20
    ratio = 1.0 / (0.177 + 0.000823 * h) ** 0.4
    sigma = np.array([sigma_w * ratio, sigma_w * ratio, sigma_w])
    l_uv = h / (0.177 + 0.000823 * h) ** 1.2
    lengths = np.array([l_uv, l_uv, h / 2.0]) * FT
    return sigma, lengths


@dataclass(frozen=True)
class TurbulenceConfig:
    sigma: tuple[float, float, float] = (0.0, 0.0, 0.0)
    length: tuple[float, float, float] = (36.5, 36.5, 2.5)
    airspeed: float = 5.0
    n_components: int = 256
    f_min: float = 0.01
    f_max: float = 10.0
    seed: int = 0
    heading: float = 0.0


@dataclass(frozen=True)
class GustConfig:
    amplitude: float = 20.0
    start: float = 7.0
    duration: float = 1.0
    direction: tuple[float, float, float] = (1.0, 0.0, 0.0)

    def __post_init__(self) -> None:
        if self.duration <= 0:
            raise ValueError("gust duration must be positive")


@dataclass(frozen=True)
class WindModel:
    """Immutable wind field ``v_w(t) = v_c + v_t(t) + v_g(t)``."""

    constant: tuple[float, float, float] = (0.0, 0.0, 0.0)
    turbulence: TurbulenceConfig | None = None
    gust: GustConfig | None = None
    _omega: np.ndarray = field(init=False, repr=False, compare=False)
    _amp: np.ndarray = field(init=False, repr=False, compare=False)
    _phase: np.ndarray = field(init=False, repr=False, compare=False)
    _frame: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "constant", tuple(float(c) for c in self.constant))
        tc = self.turbulence
        if tc is None:
            object.__setattr__(self, "_omega", np.zeros(0))
            object.__setattr__(self, "_amp", np.zeros((3, 0)))
            object.__setattr__(self, "_phase", np.zeros((3, 0)))
            object.__setattr__(self, "_frame", np.eye(3))
            return
        m = int(tc.n_components)
        # geometric bin edges; component frequency at the log-centre of each bin
        edges = 2.0 * np.pi * np.geomspace(tc.f_min, tc.f_max, m + 1)
        omega = np.sqrt(edges[:-1] * edges[1:])
        d_omega = np.diff(edges)
        amp = np.zeros((3, m))
        for i, axis in enumerate("uvw"):
            s = float(tc.sigma[i])
            if s == 0.0:
                continue
            psd = von_karman_psd(omega, s, float(tc.length[i]), float(tc.airspeed), axis)
            a = np.sqrt(2.0 * psd * d_omega)
            # band-limited synthesis: rescale so the process variance is sigma^2
            amp[i] = a * s / np.sqrt(0.5 * np.sum(a * a))
        rng = np.random.default_rng(tc.seed)
        phase = rng.uniform(0.0, 2.0 * np.pi, size=(3, m))
        c, s = np.cos(tc.heading), np.sin(tc.heading)
        frame = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        object.__setattr__(self, "_omega", omega)
        object.__setattr__(self, "_amp", amp)
        object.__setattr__(self, "_phase", phase)
        object.__setattr__(self, "_frame", frame)

    @classmethod
    def calm(cls) -> "WindModel":
        return cls()

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> "WindModel":
        turb = data.get("turbulence")
        gust = data.get("gust")
        return cls(
            constant=tuple(data.get("constant", (0.0, 0.0, 0.0))),
            turbulence=None if not turb else TurbulenceConfig(**_tupled(turb)),
            gust=None if not gust else GustConfig(**_tupled(gust)),
        )

    def turbulence_sample(self, t) -> np.ndarray:
        """Turbulent velocity in the world frame; ``(3,)`` or ``(len(t), 3)``."""
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        if self._omega.size == 0:
            out = np.zeros((tt.size, 3))
        else:
            arg = tt[:, None, None] * self._omega[None, None, :] + self._phase[None]
            local = np.sum(self._amp[None] * np.cos(arg), axis=2)
            out = local @ self._frame.T
        return out[0] if t.ndim == 0 else out

    def gust_sample(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        tt = np.atleast_1d(t)
        out = np.zeros((tt.size, 3))
        g = self.gust
        if g is not None:
            tau = tt - g.start
            inside = (tau >= 0.0) & (tau <= g.duration)
            mag = np.where(inside, 0.5 * g.amplitude * (1.0 - np.cos(2.0 * np.pi * tau / g.duration)), 0.0)
            d = np.asarray(g.direction, dtype=float)
            out = mag[:, None] * (d / np.linalg.norm(d))
        return out[0] if t.ndim == 0 else out

    def velocity(self, t) -> np.ndarray:
        """Total wind velocity ``v_c + v_t + v_g`` at time(s) ``t``."""
        return np.asarray(self.constant) + self.turbulence_sample(t) + self.gust_sample(t)


def _tupled(d: Mapping[str, Any]) -> dict[str, Any]:
    return {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}


def turbulence_sample(model: WindModel, t) -> np.ndarray:
    return model.turbulence_sample(t)


def gust_sample(model: WindModel, t) -> np.ndarray:
    return model.gust_sample(t)


def wind_velocity(model: WindModel, t) -> np.ndarray:
    return model.velocity(t)


def drag_force(v_w, v, k_drag) -> np.ndarray:
    """Drag ``K_drag (v_w - v)``; ``k_drag`` is a diagonal 3-vector or 3x3 matrix."""
    k = np.asarray(k_drag, dtype=float)
    rel = np.asarray(v_w, dtype=float) - np.asarray(v, dtype=float)
    if k.ndim == 2:
        k = np.diag(k)
    return k * rel


def random_scenario(
    seed: int,
    speed_range: tuple[float, float] = (3.0, 10.0),
    altitude: float = 5.0,
    n_components: int = 256,
    gust_amplitude: float | None = None,
    gust_start: float = 7.0,
    gust_duration: float = 1.0,
) -> WindModel:
    """Randomised wind: horizontal constant wind with random heading and
    magnitude, plus low-altitude turbulence scaled from that magnitude.

    If ``gust_amplitude`` is given, a gust along the constant-wind heading
    is added over ``[gust_start, gust_start + gust_duration]``.
    """
    rng = np.random.default_rng([seed, 0x57494E44])
    heading = float(rng.uniform(0.0, 2.0 * np.pi))
    speed = float(rng.uniform(*speed_range))
    sigma, lengths = low_altitude_parameters(altitude, speed)
    turb = TurbulenceConfig(
        sigma=tuple(float(s) for s in sigma),
        length=tuple(float(v) for v in lengths),
        airspeed=max(speed, 1.0),
        n_components=n_components,
        seed=int(rng.integers(2**31)),
        heading=heading,
    )
    direction = (float(np.cos(heading)), float(np.sin(heading)), 0.0)
    gust = None
    if gust_amplitude is not None:
        gust = GustConfig(gust_amplitude, gust_start, gust_duration, direction)
    return WindModel(constant=(speed * direction[0], speed * direction[1], 0.0), turbulence=turb, gust=gust)
