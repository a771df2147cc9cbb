"""Online disturbance estimation with independent exact GPs.

One GP per output axis shares the same inputs and kernel, so a single
Cholesky factor of ``K + alpha I`` serves all three axes.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_solve, solve_triangular


class IllConditionedKernel(np.linalg.LinAlgError):
    """``K + alpha I`` is not numerically positive definite."""


@dataclass(frozen=True)
class GPConfig:
    length_scale: float = 10.0
    prior_variance: float = 1.0
    noise: float = 5e-4
    window: int = 5
    beta: float = 3.0

    def __post_init__(self) -> None:
        if self.length_scale <= 0 or self.prior_variance <= 0:
            raise ValueError("length_scale and prior_variance must be positive")
        if self.noise < 0:
            raise ValueError("noise must be non-negative")
        if self.window < 1:
            raise ValueError("window must hold at least one pair")
        if self.beta <= 0:
            raise ValueError("beta must be positive")

    @property
    def sigma_f(self) -> float:
        return float(np.sqrt(self.prior_variance))


def kernel(x, x_prime, config: GPConfig) -> np.ndarray:
    """Squared-exponential kernel with isotropic length scale.

    Accepts single points or stacks of points (last axis is the input
    dimension) and broadcasts like numpy.
    """
    d = (np.asarray(x, dtype=float) - np.asarray(x_prime, dtype=float)) / config.length_scale
    return config.prior_variance * np.exp(-0.5 * np.sum(d * d, axis=-1))


class GPModel:
    """Sliding-window GP over ``(x in R^6, y in R^3)`` pairs."""

    def __init__(self, config: GPConfig, n_outputs: int = 3) -> None:
        self.config = config
        self.n_outputs = n_outputs
        self._x: deque[np.ndarray] = deque(maxlen=config.window)
        self._y: deque[np.ndarray] = deque(maxlen=config.window)
        self._X: np.ndarray | None = None
        self._chol: np.ndarray | None = None
        self._coef: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._x)

    @property
    def inputs(self) -> np.ndarray:
        return np.array(self._x)

    @property
    def targets(self) -> np.ndarray:
        return np.array(self._y)

    def push(self, x, y, refit: bool = True) -> "GPModel":
        """Append a pair, evicting the oldest beyond the window, and refit."""
        self._x.append(np.asarray(x, dtype=float).copy())
        self._y.append(np.asarray(y, dtype=float).reshape(self.n_outputs).copy())
        if refit:
            self.refit()
        return self

    def refit(self) -> None:
        if not self._x:
            self._X = self._chol = self._coef = None
            return
        X = np.array(self._x)
        Y = np.array(self._y)
        K = kernel(X[:, None, :], X[None, :, :], self.config)
        K[np.diag_indices_from(K)] += self.config.noise
        try:
            chol = np.linalg.cholesky(K)
        except np.linalg.LinAlgError as exc:
            raise IllConditionedKernel(
                "K + alpha*I is not positive definite; increase the noise level"
            ) from exc
        self._X = X
        self._chol = chol
        self._coef = cho_solve((chol, True), Y)

    def predict(self, x_star) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and standard deviation per output axis."""
        sf = self.config.sigma_f
        if self._chol is None:
            return np.zeros(self.n_outputs), np.full(self.n_outputs, sf)
        k = kernel(self._X, np.asarray(x_star, dtype=float), self.config)
        mu = k @ self._coef
        v = solve_triangular(self._chol, k, lower=True)
        var = self.config.prior_variance - v @ v
        sigma = np.sqrt(min(max(var, 0.0), self.config.prior_variance))
        return mu, np.full(self.n_outputs, sigma)


def confidence_radius(sigma, beta: float) -> float:
    """``||(beta, ..., beta)|| * ||sigma||`` for a vector of per-axis stds."""
    sigma = np.asarray(sigma, dtype=float)
    return float(beta * np.sqrt(sigma.size) * np.linalg.norm(sigma))
