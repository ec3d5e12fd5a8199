"""Geometric diagnostics for sampling trajectories.

Functions here take either a :class:`~pfode.solvers.Trajectory` or a raw
``(N+1, d)`` array of states ordered from the initial noise to the final
sample.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import os

import numpy as np

from .errors import DegenerateError, DimensionMismatchError, DomainError
from .oracles import KDEOracle, coefficient_entropy

__all__ = [
    "DeviationProfile",
    "PcaReport",
    "FrenetReport",
    "deviation_profile",
    "pca_reconstruct",
    "direct_pca_ratios",
    "procrustes_align",
    "align_batch",
    "project_3d",
    "frenet_stats",
    "eps_profile",
    "entropy_profile",
    "map_trajectories",
]


def _states(traj) -> np.ndarray:
    X = np.asarray(getattr(traj, "states", traj), dtype=float)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DimensionMismatchError("expected an (N+1, d) array of at least two states")
    scales = getattr(traj, "scales", None)
    if scales is not None and not np.all(scales == 1.0):
        X = X / np.asarray(scales)[:, None]
    return X


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("PFODE_THREADS", "1")))
    except ValueError:
        return 1


def map_trajectories(fn, trajs, *args, **kw) -> list:
    """Apply ``fn`` to each trajectory, using up to ``PFODE_THREADS`` threads.

    Output order always follows input order.
    """
    n = _workers()
    if n == 1 or len(trajs) < 2:
        return [fn(t, *args, **kw) for t in trajs]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(lambda t: fn(t, *args, **kw), trajs))


# ---------------------------------------------------------------- 1-D deviation

@dataclass
class DeviationProfile:
    d_td: np.ndarray
    d_fsd: np.ndarray
    projection: np.ndarray
    endpoint_distance: float

    @property
    def max_ratio(self) -> float:
        return float(self.d_td.max() / self.endpoint_distance)


def _chord(X):
    v = X[-1] - X[0]
    L = float(np.linalg.norm(v))
    if L < 1e-12:
        raise DegenerateError("trajectory endpoints coincide")
    return v, L


def deviation_profile(traj) -> DeviationProfile:
    """Distance of each state to the chord joining the endpoints, and to the final sample.

    With ``v_n = x_final - x_n`` and the chord ``v = x_final - x_init``,
    ``d_td = sqrt(||v_n||^2 - (v_n . v / ||v||)^2)``.
    """
    X = _states(traj)
    v, L = _chord(X)
    vn = X[-1] - X
    proj = vn @ (v / L)
    d_fsd = np.linalg.norm(vn, axis=1)
    # perpendicular component formed explicitly; avoids cancellation of the Pythagorean form
    perp = vn - np.outer(proj, v / L)
    d_td = np.linalg.norm(perp, axis=1)
    d_td[0] = d_td[-1] = 0.0
    return DeviationProfile(d_td=d_td, d_fsd=d_fsd, projection=proj, endpoint_distance=L)


# ---------------------------------------------------------------- PCA

@dataclass
class PcaReport:
    k: int
    errors: np.ndarray
    ratios: np.ndarray
    basis: np.ndarray  # (k, d): chord direction followed by complement PCs

    @property
    def cumulative(self) -> float:
        return float(self.ratios.sum())


def pca_reconstruct(traj, k: int) -> PcaReport:
    """Reconstruct states in span{chord, top k-1 PCs of the chord complement}.

    The complement of each state (its component orthogonal to the chord,
    relative to the final sample) is PCA'd after mean-centring.  The
    reconstruction projects onto the nested subspaces, so errors never
    increase with ``k`` and ``k = 1`` reproduces the 1-D deviation.  When
    fewer than ``k - 1`` informative components exist the basis is padded
    with zero vectors and the corresponding ratios are 0.
    """
    X = _states(traj)
    if not 1 <= k <= X.shape[1]:
        raise DomainError(f"k must lie in [1, d], got {k}")
    if X.shape[0] <= k:
        raise DomainError("trajectory must be longer than k")
    v, L = _chord(X)
    e = v / L
    rel = X - X[-1]
    w = rel - np.outer(rel @ e, e)
    wc = w - w.mean(axis=0)
    _, sv, Vt = np.linalg.svd(wc, full_matrices=False)
    var = sv**2
    total = var.sum()
    m = k - 1
    pcs = np.zeros((m, X.shape[1]))
    ratios = np.zeros(k)
    tol = 1e-12 * max(sv[0] if sv.size else 0.0, 1e-300)
    avail = int(np.sum(sv > tol)) if total > 0 else 0
    use = min(m, avail)
    pcs[:use] = Vt[:use]
    if total > 0:
        ratios[: min(k, avail)] = var[: min(k, avail)] / total
    resid = w - (w @ pcs.T) @ pcs
    errors = np.linalg.norm(resid, axis=1)
    basis = np.vstack([e[None], pcs])
    return PcaReport(k=k, errors=errors, ratios=ratios, basis=basis)


def direct_pca_ratios(traj, k: int = 3) -> np.ndarray:
    """Explained-variance fractions of the top ``k`` PCs of the raw (centred) states."""
    X = _states(traj)
    sv = np.linalg.svd(X - X.mean(axis=0), compute_uv=False)
    var = sv**2
    out = np.zeros(k)
    m = min(k, var.size)
    out[:m] = var[:m] / var.sum()
    return out


def project_3d(traj) -> np.ndarray:
    """Coordinates in (chord, PC1, PC2) of the complement; an ``(N+1, 3)`` curve."""
    X = _states(traj)
    rep = pca_reconstruct(traj, 3)
    return (X - X[-1]) @ rep.basis.T


# ---------------------------------------------------------------- Procrustes

def procrustes_align(R, Rref, fix_first_axis: bool = False) -> tuple[np.ndarray, float]:
    """Orthogonal ``O`` minimising ``||Rref - R O||_F``.

    With ``fix_first_axis`` the first coordinate is held fixed and only the
    remaining block is rotated/reflected.
    """
    R = np.asarray(R, dtype=float)
    Rref = np.asarray(Rref, dtype=float)
    if R.shape != Rref.shape or R.ndim != 2:
        raise DimensionMismatchError("inputs to Procrustes alignment must have equal 2-D shapes")
    if R.shape[0] < 3:
        raise DomainError("need at least three points")
    p = R.shape[1]
    if fix_first_axis:
        U, _, Vt = np.linalg.svd(R[:, 1:].T @ Rref[:, 1:])
        O = np.eye(p)
        O[1:, 1:] = U @ Vt
    else:
        U, _, Vt = np.linalg.svd(R.T @ Rref)
        O = U @ Vt
    return O, float(np.linalg.norm(Rref - R @ O))


def align_batch(curves, fix_first_axis: bool = True) -> tuple[list[np.ndarray], list[float]]:
    """Align every curve to the first one, which serves as reference."""
    curves = [np.asarray(c, dtype=float) for c in curves]
    ref = curves[0]
    out, res = [], []
    for c in curves:
        O, r = procrustes_align(c, ref, fix_first_axis)
        out.append(c @ O)
        res.append(r)
    return out, res


# ---------------------------------------------------------------- Frenet-Serret

@dataclass
class FrenetReport:
    arclength: np.ndarray
    index: np.ndarray  # interior point indices
    curvature: np.ndarray
    torsion: np.ndarray
    torsion_flag: np.ndarray  # True where torsion is undefined and reported as 0
    window: int


def _local_derivatives(P, xi, window):
    """First three derivatives from windowed least-squares cubic fits."""
    half = window // 2
    n = P.shape[0]
    idx = np.arange(half, n - half)
    d1 = np.empty((idx.size, P.shape[1]))
    d2 = np.empty_like(d1)
    d3 = np.empty_like(d1)
    fact = np.array([1.0, 1.0, 2.0, 6.0])
    for j, i in enumerate(idx):
        sl = slice(i - half, i + half + 1)
        u = xi[sl] - xi[i]
        scale = np.max(np.abs(u))
        A = np.vander(u / scale, 4, increasing=True)
        coef, *_ = np.linalg.lstsq(A, P[sl], rcond=None)
        coef = coef * (fact / scale ** np.arange(4))[:, None]
        d1[j], d2[j], d3[j] = coef[1], coef[2], coef[3]
    return idx, d1, d2, d3


def frenet_stats(curve, window: int = 101, param=None) -> FrenetReport:
    """Curvature and torsion of a space curve in ``R^3``.

    Parameters
    ----------
    curve : (n, 3) array
    window : int
        Odd number of points in each local cubic fit (>= 7).
    param : (n,) array, optional
        Curve parameter, strictly monotone.  Defaults to the point index.
    """
    P = np.asarray(curve, dtype=float)
    if P.ndim != 2 or P.shape[1] != 3:
        raise DimensionMismatchError("frenet_stats expects an (n, 3) curve")
    if window < 7 or window % 2 == 0:
        raise DomainError("window must be odd and at least 7")
    if P.shape[0] <= window:
        raise DomainError("window too large for the number of points")
    xi = np.arange(P.shape[0], dtype=float) if param is None else np.asarray(param, dtype=float)
    if xi.shape != (P.shape[0],) or np.any(np.diff(xi) == 0) or not (np.all(np.diff(xi) > 0) or np.all(np.diff(xi) < 0)):
        raise DomainError("curve parameter must be strictly monotone")
    idx, d1, d2, d3 = _local_derivatives(P, xi, window)
    cr = np.cross(d1, d2)
    crn = np.linalg.norm(cr, axis=1)
    speed = np.linalg.norm(d1, axis=1)
    kappa = crn / speed**3
    flag = crn < 1e-12
    tau = np.where(flag, 0.0, np.einsum("ij,ij->i", cr, d3) / np.where(flag, 1.0, crn**2))
    chords = np.linalg.norm(np.diff(P, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(chords)])
    return FrenetReport(arclength=s, index=idx, curvature=kappa, torsion=tau, torsion_flag=flag, window=window)


# ---------------------------------------------------------------- eps / entropy

def eps_profile(traj) -> tuple[np.ndarray, float]:
    """Per-state ``||eps||`` and the length ``sum_n dsigma_n ||eps_n||`` of the trajectory."""
    if getattr(traj, "denoised", None) is None:
        raise DomainError("eps_profile needs recorded denoising outputs")
    norms = np.linalg.norm(traj.eps(), axis=1)
    dsig = -np.diff(traj.sigmas)
    return norms, float(np.sum(dsig * norms[: dsig.size]))


def entropy_profile(oracle, traj) -> tuple[np.ndarray, np.ndarray]:
    """Entropy of the KDE convex-combination weights at each state, and its time derivative."""
    if not isinstance(oracle, KDEOracle):
        raise DomainError("entropy_profile requires a KDE oracle")
    X = _states(traj)
    sig = np.asarray(traj.sigmas)
    H = np.empty(X.shape[0])
    for n in range(X.shape[0]):
        H[n] = coefficient_entropy(oracle.weights(X[n], sig[n]))
    t = np.asarray(traj.times.times)
    return H, np.diff(H) / np.diff(t)
