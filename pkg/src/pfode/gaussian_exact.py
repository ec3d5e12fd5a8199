"""Exact PF-ODE trajectories for (low-rank) Gaussian data.

For ``x_0 ~ N(mu, U diag(lam) U^T)`` the VE probability-flow ODE is linear
and diagonalises in the eigenbasis: the coordinate along ``u_k`` scales by
``s_k(sigma) = sqrt((lam_k + sigma^2) / (lam_k + sigma_T^2))`` and the
orthogonal complement scales by ``sigma / sigma_T``.  Subtracting the chord
between ``x_0`` and ``x_T`` leaves the residual ``sum_k phi_k u_k u_k^T
(x_T - mu)``.
"""
from __future__ import annotations

import numpy as np
from scipy.optimize import brentq

from .errors import DimensionMismatchError, DomainError
from .oracles import LowRankGaussian

__all__ = [
    "GaussianTrajectoryModel",
    "exact_state",
    "phi",
    "phi_prime",
    "residual",
    "residual_norm_sq",
    "expected_residual_norm_sq",
    "phi_extremum",
    "phi_extremum_closed_form",
]


def _scale(lam, sigma, sigma_T):
    return np.sqrt((lam + sigma**2) / (lam + sigma_T**2))


def phi(lam, sigma, sigma_T):
    """Residual coefficient along an eigen-direction of variance ``lam``.

    Zero at ``sigma = 0`` and ``sigma = sigma_T``, negative in between.
    """
    lam = np.asarray(lam, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    if np.any(lam <= 0):
        raise DomainError("eigenvalue must be positive")
    if np.any(sigma < 0) or np.any(sigma > sigma_T * (1 + 1e-12)):
        raise DomainError("sigma must lie in [0, sigma_T]")
    s0 = _scale(lam, 0.0, sigma_T)
    return _scale(lam, sigma, sigma_T) - s0 - (sigma / sigma_T) * (1.0 - s0)


def phi_prime(lam, sigma, sigma_T):
    s0 = np.sqrt(lam / (lam + sigma_T**2))
    return sigma / np.sqrt((lam + sigma**2) * (lam + sigma_T**2)) - (1.0 - s0) / sigma_T


def phi_extremum(lam: float, sigma_T: float) -> tuple[float, float]:
    """Location and value of the unique minimum of ``phi`` on ``(0, sigma_T)``.

    Found by bracketed root finding on the derivative; ``phi'`` is negative
    at 0 and positive at ``sigma_T`` because ``phi`` is strictly convex there.
    """
    if not lam > 0 or not sigma_T > 0:
        raise DomainError("need lam > 0 and sigma_T > 0")
    f = lambda s: phi_prime(lam, s, sigma_T)
    smin = brentq(f, 0.0, sigma_T, xtol=1e-15 * max(sigma_T, 1.0), rtol=4 * np.finfo(float).eps, maxiter=500)
    return float(smin), float(phi(lam, smin, sigma_T))


def phi_extremum_closed_form(lam: float, sigma_T: float) -> float:
    """Reading ``sigma_min^2 = (sqrt(lam (lam + sigma_T^2)) - lam) / 2`` of the printed formula."""
    return float(np.sqrt(0.5 * (np.sqrt(lam * (lam + sigma_T**2)) - lam)))


class GaussianTrajectoryModel:
    """Analytic trajectories of a :class:`LowRankGaussian` from noise level ``sigma_T``."""

    def __init__(self, g: LowRankGaussian, sigma_T: float = 80.0):
        if not sigma_T > 0:
            raise DomainError("sigma_T must be positive")
        self.g = g
        self.sigma_T = float(sigma_T)
        self.s0 = _scale(g.lam, 0.0, self.sigma_T)

    def _coords(self, x_T):
        x_T = np.asarray(x_T, dtype=float)
        if x_T.shape[-1] != self.g.d:
            raise DimensionMismatchError("x_T dimension does not match the Gaussian")
        diff = x_T - self.g.mean
        c = diff @ self.g.U
        return diff, c

    def _check_sigma(self, sigma):
        if sigma < 0 or sigma > self.sigma_T * (1 + 1e-12):
            raise DomainError(f"sigma={sigma} outside [0, {self.sigma_T}]")

    def exact_state(self, x_T, sigma: float) -> np.ndarray:
        self._check_sigma(sigma)
        diff, c = self._coords(x_T)
        g = self.g
        perp = diff - c @ g.U.T
        sk = _scale(g.lam, sigma, self.sigma_T)
        return g.mean + (sigma / self.sigma_T) * perp + (c * sk) @ g.U.T

    def final_sample(self, x_T) -> np.ndarray:
        return self.exact_state(x_T, 0.0)

    def residual(self, x_T, sigma: float) -> np.ndarray:
        self._check_sigma(sigma)
        diff, c = self._coords(x_T)
        if self.g.rank == 0:
            return np.zeros_like(diff)
        return (c * phi(self.g.lam, sigma, self.sigma_T)) @ self.g.U.T

    def residual_norm_sq(self, x_T, sigma: float):
        self._check_sigma(sigma)
        _, c = self._coords(x_T)
        if self.g.rank == 0:
            return np.zeros(np.shape(c)[:-1]) if np.ndim(c) > 1 else 0.0
        p = phi(self.g.lam, sigma, self.sigma_T)
        return np.sum((p * c) ** 2, axis=-1)

    def expected_residual_norm_sq(self, sigma: float) -> float:
        """``E ||residual||^2`` for ``x_T - mu ~ N(0, Sigma + sigma_T^2 I)``."""
        self._check_sigma(sigma)
        if self.g.rank == 0:
            return 0.0
        p = phi(self.g.lam, sigma, self.sigma_T)
        return float(np.sum(p**2 * (self.g.lam + self.sigma_T**2)))


def exact_state(model: GaussianTrajectoryModel, x_T, sigma_t: float) -> np.ndarray:
    return model.exact_state(x_T, sigma_t)


def residual(model: GaussianTrajectoryModel, x_T, sigma_t: float) -> np.ndarray:
    return model.residual(x_T, sigma_t)


def residual_norm_sq(model: GaussianTrajectoryModel, x_T, sigma_t: float):
    return model.residual_norm_sq(x_T, sigma_t)


def expected_residual_norm_sq(model: GaussianTrajectoryModel, sigma_t: float) -> float:
    return model.expected_residual_norm_sq(sigma_t)
