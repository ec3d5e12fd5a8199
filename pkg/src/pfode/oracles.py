"""Closed-form denoisers for empirical, Gaussian and Gaussian-mixture data.

Every oracle maps a state ``x`` (shape ``(d,)`` or ``(B, d)``) and a noise
level ``sigma`` to the posterior mean ``r(x; sigma) = E[x_0 | x_t = x]``
of the VE diffusion ``x_t = x_0 + sigma z``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.special import logsumexp

from .errors import DimensionMismatchError, DomainError

__all__ = [
    "Dataset",
    "LowRankGaussian",
    "DenoiseResult",
    "KDEOracle",
    "GaussianOracle",
    "MixtureOracle",
    "kde_denoise",
    "gaussian_denoise",
    "mixture_denoise",
    "denoiser_to_score",
    "score_to_denoiser",
    "denoiser_to_eps",
    "eps_to_denoiser",
    "kde_logdensity",
    "mean_shift_iterate",
    "coefficient_entropy",
    "fit_low_rank_gaussian",
    "gaussian_logpdf_noisy",
]

_FLUSH = 1e-300
_CHUNK = 1 << 22  # max entries of a (batch, points) distance block


class Dataset:
    """An immutable point cloud ``y_1..y_n`` in ``R^d``."""

    def __init__(self, points):
        p = np.array(points, dtype=float)
        if p.ndim == 1:
            p = p[:, None]
        if p.ndim != 2 or p.shape[0] < 1 or p.shape[1] < 1:
            raise DimensionMismatchError("dataset must be a non-empty (count, d) array")
        if not np.all(np.isfinite(p)):
            raise DomainError("dataset contains non-finite values")
        p.setflags(write=False)
        self.points = p
        self.center = p.mean(axis=0)
        self._centered = p - self.center
        self._sqnorm = np.einsum("ij,ij->i", self._centered, self._centered)

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def count(self) -> int:
        return self.points.shape[0]

    def __len__(self):
        return self.count

    def affine_rank(self, tol: float = 1e-9) -> int:
        if self.count == 1:
            return 0
        sv = np.linalg.svd(self._centered, compute_uv=False)
        return int(np.sum(sv > tol * max(sv[0], 1.0)))


@dataclass(frozen=True)
class DenoiseResult:
    r: np.ndarray
    weights: np.ndarray | None = None


class LowRankGaussian:
    """Gaussian ``N(mu, U diag(lam) U^T)`` with ``r = rank`` orthonormal columns."""

    def __init__(self, mean, U=None, lam=None):
        mu = np.array(mean, dtype=float).ravel()
        d = mu.size
        U = np.zeros((d, 0)) if U is None else np.array(U, dtype=float).reshape(d, -1)
        lam = np.zeros(0) if lam is None else np.array(lam, dtype=float).ravel()
        if U.shape[1] != lam.size:
            raise DimensionMismatchError("eigenvector/eigenvalue count mismatch")
        if lam.size:
            if np.any(lam <= 0):
                raise DomainError("eigenvalues must be positive")
            if np.any(np.diff(lam) > 0):
                raise DomainError("eigenvalues must be sorted descending")
            if np.max(np.abs(U.T @ U - np.eye(lam.size))) > 1e-10:
                raise DomainError("eigenvectors must be orthonormal")
        for a in (mu, U, lam):
            a.setflags(write=False)
        self.mean, self.U, self.lam = mu, U, lam

    @property
    def d(self) -> int:
        return self.mean.size

    @property
    def rank(self) -> int:
        return self.lam.size

    def covariance(self) -> np.ndarray:
        return (self.U * self.lam) @ self.U.T

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "eigvecs": self.U.T.tolist(), "eigvals": self.lam.tolist()}

    @classmethod
    def from_dict(cls, obj: dict) -> "LowRankGaussian":
        mu = np.asarray(obj["mean"], dtype=float)
        vecs = np.asarray(obj.get("eigvecs", []), dtype=float).reshape(-1, mu.size)
        return cls(mu, vecs.T, obj.get("eigvals", []))

    @classmethod
    def from_covariance(cls, mean, cov, tol: float = 1e-12) -> "LowRankGaussian":
        w, V = np.linalg.eigh(np.asarray(cov, dtype=float))
        order = np.argsort(w)[::-1]
        w, V = w[order], V[:, order]
        keep = w > tol * max(w[0], 1.0)
        return cls(mean, V[:, keep], w[keep])


def fit_low_rank_gaussian(data: Dataset, rank: int | None = None, tol: float = 1e-10) -> LowRankGaussian:
    """Sample mean and (truncated) sample covariance of a dataset."""
    X = data.points - data.center
    n = max(data.count - 1, 1)
    _, sv, Vt = np.linalg.svd(X, full_matrices=False)
    lam = sv**2 / n
    keep = lam > tol * max(lam[0] if lam.size else 0.0, 1.0)
    if rank is not None:
        keep[rank:] = False
    return LowRankGaussian(data.center, Vt[keep].T, lam[keep])


# ---------------------------------------------------------------- helpers

def _as_batch(x, d: int) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    xb = x[None, :] if single else x
    if xb.ndim != 2 or xb.shape[1] != d:
        raise DimensionMismatchError(f"expected states of dimension {d}, got shape {x.shape}")
    return xb, single


def _check_sigma(sigma) -> float:
    sigma = float(sigma)
    if not sigma > 0 or not np.isfinite(sigma):
        raise DomainError(f"noise level must be positive and finite, got {sigma}")
    return sigma


def _sq_dists(data: Dataset, xb: np.ndarray, exact: bool = False) -> np.ndarray:
    """Squared distances ``||x_b - y_i||^2`` as a (B, n) array.

    The fast path expands the square on mean-centred coordinates; the exact
    path forms differences explicitly (used for log-density diagnostics).
    """
    xc = xb - data.center
    if exact:
        out = np.empty((xb.shape[0], data.count))
        step = max(1, _CHUNK // max(data.count * data.d, 1))
        for a in range(0, xb.shape[0], step):
            diff = xc[a:a + step, None, :] - data._centered[None, :, :]
            out[a:a + step] = np.einsum("bnd,bnd->bn", diff, diff)
        return out
    d2 = np.einsum("bd,bd->b", xc, xc)[:, None] - 2.0 * (xc @ data._centered.T) + data._sqnorm[None, :]
    return np.maximum(d2, 0.0)


def _softmax_weights(logits: np.ndarray) -> np.ndarray:
    logits = logits - logits.max(axis=1, keepdims=True)
    w = np.exp(logits)
    w[w < _FLUSH] = 0.0
    w /= w.sum(axis=1, keepdims=True)
    return w


def _kde_weights(data: Dataset, xb: np.ndarray, sigma: float) -> np.ndarray:
    out = np.empty((xb.shape[0], data.count))
    step = max(1, _CHUNK // data.count)
    for a in range(0, xb.shape[0], step):
        d2 = _sq_dists(data, xb[a:a + step])
        out[a:a + step] = _softmax_weights(-d2 / (2.0 * sigma**2))
    return out


# ---------------------------------------------------------------- oracles

class KDEOracle:
    """Optimal denoiser of the empirical data distribution.

    The posterior mean is a softmax-weighted convex combination of the
    data points, with logits ``-||x - y_i||^2 / (2 sigma^2)``.
    """

    kind = "kde"

    def __init__(self, data: Dataset | np.ndarray, descriptor: str | None = None):
        self.data = data if isinstance(data, Dataset) else Dataset(data)
        self.descriptor = descriptor or f"kde:<{self.data.count}x{self.data.d}>"

    @property
    def d(self) -> int:
        return self.data.d

    def weights(self, x, sigma) -> np.ndarray:
        sigma = _check_sigma(sigma)
        xb, single = _as_batch(x, self.d)
        w = _kde_weights(self.data, xb, sigma)
        return w[0] if single else w

    def denoise(self, x, sigma) -> np.ndarray:
        sigma = _check_sigma(sigma)
        xb, single = _as_batch(x, self.d)
        r = _kde_weights(self.data, xb, sigma) @ self.data.points
        return r[0] if single else r


class GaussianOracle:
    """Posterior mean for a low-rank Gaussian, O(d r) per state.

    ``r = mu + U diag(lam / (lam + sigma^2)) U^T (x - mu)``, which is the
    eigen form of ``x + sigma^2 (Sigma + sigma^2 I)^{-1} (mu - x)``.
    """

    kind = "gaussian"

    def __init__(self, g: LowRankGaussian, descriptor: str | None = None):
        self.g = g
        self.descriptor = descriptor or f"gaussian:<d={g.d},rank={g.rank}>"

    @property
    def d(self) -> int:
        return self.g.d

    def denoise(self, x, sigma) -> np.ndarray:
        sigma = _check_sigma(sigma)
        xb, single = _as_batch(x, self.d)
        g = self.g
        coef = (xb - g.mean) @ g.U
        r = g.mean + (coef * (g.lam / (g.lam + sigma**2))) @ g.U.T
        return r[0] if single else r

    def logpdf(self, x, sigma) -> np.ndarray:
        xb, single = _as_batch(x, self.d)
        out = gaussian_logpdf_noisy(self.g, xb, _check_sigma(sigma))
        return out[0] if single else out


def gaussian_logpdf_noisy(g: LowRankGaussian, xb: np.ndarray, sigma: float) -> np.ndarray:
    """``log N(x; mu, Sigma + sigma^2 I)`` via the matrix-determinant lemma."""
    diff = xb - g.mean
    coef = diff @ g.U
    perp = diff - coef @ g.U.T
    s2 = sigma**2
    quad = np.einsum("bd,bd->b", perp, perp) / s2 + np.sum(coef**2 / (g.lam + s2), axis=1)
    logdet = (g.d - g.rank) * np.log(s2) + np.sum(np.log(g.lam + s2))
    return -0.5 * (g.d * np.log(2 * np.pi) + logdet + quad)


class MixtureOracle:
    """Responsibility-weighted combination of per-component Gaussian denoisers."""

    kind = "mixture"

    def __init__(self, components: Sequence[tuple[float, LowRankGaussian]], descriptor: str | None = None):
        comps = list(components)
        if not comps:
            raise DomainError("mixture needs at least one component")
        w = np.array([c[0] for c in comps], dtype=float)
        if np.any(w <= 0):
            raise DomainError("mixture weights must be positive")
        if abs(w.sum() - 1.0) > 1e-9:
            raise DomainError(f"mixture weights must sum to 1, got {w.sum()}")
        dims = {c[1].d for c in comps}
        if len(dims) != 1:
            raise DimensionMismatchError("mixture components differ in dimension")
        self.weights_ = w
        self.log_weights = np.log(w)
        self.components = [GaussianOracle(c[1]) for c in comps]
        self.descriptor = descriptor or f"mixture:<{len(comps)} components>"

    @property
    def d(self) -> int:
        return self.components[0].d

    def responsibilities(self, x, sigma) -> np.ndarray:
        sigma = _check_sigma(sigma)
        xb, single = _as_batch(x, self.d)
        logp = np.stack([lw + gaussian_logpdf_noisy(c.g, xb, sigma)
                         for lw, c in zip(self.log_weights, self.components)], axis=1)
        resp = _softmax_weights(logp)
        return resp[0] if single else resp

    def denoise(self, x, sigma) -> np.ndarray:
        xb, single = _as_batch(x, self.d)
        if len(self.components) == 1:
            r = self.components[0].denoise(xb, sigma)
        else:
            resp = self.responsibilities(xb, sigma)
            r = np.zeros_like(xb)
            for j, c in enumerate(self.components):
                r += resp[:, j:j + 1] * c.denoise(xb, sigma)
        return r[0] if single else r


# ---------------------------------------------------------------- functional API

def kde_denoise(data: Dataset, x, sigma, want_weights: bool = False) -> DenoiseResult:
    orc = KDEOracle(data) if not isinstance(data, KDEOracle) else data
    sigma = _check_sigma(sigma)
    xb, single = _as_batch(x, orc.d)
    w = _kde_weights(orc.data, xb, sigma)
    r = w @ orc.data.points
    if single:
        r, w = r[0], w[0]
    return DenoiseResult(r, w if want_weights else None)


def gaussian_denoise(g: LowRankGaussian, x, sigma) -> DenoiseResult:
    return DenoiseResult(GaussianOracle(g).denoise(x, sigma))


def mixture_denoise(components, x, sigma) -> DenoiseResult:
    return DenoiseResult(MixtureOracle(components).denoise(x, sigma))


def _check_pos(**kw) -> None:
    for k, v in kw.items():
        if not np.all(np.asarray(v) > 0):
            raise DomainError(f"{k} must be positive")


def denoiser_to_score(r, x, sigma, s=1.0):
    """Score of the scaled marginal: ``(s r - x) / (s sigma)^2``."""
    _check_pos(sigma=sigma, s=s)
    return (s * np.asarray(r) - np.asarray(x)) / (s * sigma) ** 2


def score_to_denoiser(score, x, sigma, s=1.0):
    _check_pos(sigma=sigma, s=s)
    return (np.asarray(x) + (s * sigma) ** 2 * np.asarray(score)) / s


def denoiser_to_eps(r, x, sigma):
    _check_pos(sigma=sigma)
    return (np.asarray(x) - np.asarray(r)) / sigma


def eps_to_denoiser(eps, x, sigma):
    _check_pos(sigma=sigma)
    return np.asarray(x) - sigma * np.asarray(eps)


def kde_logdensity(data: Dataset, x, h):
    """Log of ``(1/n) sum_i N(x; y_i, h^2 I)``; vectorised over a batch of x."""
    h = _check_sigma(h)
    xb, single = _as_batch(x, data.d)
    d2 = _sq_dists(data, xb, exact=True)
    out = (logsumexp(-d2 / (2.0 * h * h), axis=1) - np.log(data.count)
           - 0.5 * data.d * np.log(2.0 * np.pi * h * h))
    return float(out[0]) if single else out


def mean_shift_iterate(data: Dataset, x0, h, iters: int) -> list[np.ndarray]:
    """Iterates ``x <- m(x, h)`` including the starting point."""
    if iters < 0:
        raise DomainError("iters must be >= 0")
    orc = KDEOracle(data)
    x = np.array(x0, dtype=float)
    out = [x.copy()]
    for _ in range(iters):
        x = orc.denoise(x, h)
        out.append(x.copy())
    return out


def coefficient_entropy(weights, bias: float = 1e-10) -> float:
    """Shannon entropy of convex-combination weights, ``-sum u log(u + bias)``."""
    u = np.asarray(weights, dtype=float)
    if np.any(u < 0):
        raise DomainError("weights must be nonnegative")
    if abs(u.sum() - 1.0) > 1e-9:
        raise DomainError("weights must sum to 1")
    h = -float(np.sum(u * np.log(u + bias)))
    return min(max(h, 0.0), float(np.log(u.size)))
