"""Probability-flow ODE integrators.

States evolve along ``dx/dsigma = eps(x; sigma) = (x - r(x; sigma)) / sigma``
with the noise level as integration variable.  The number of oracle
evaluations per step is 1 for Euler and iPNDM, 2 for Heun and DPM-Solver-2.

All step functions accept a single state ``(d,)`` or a batch ``(B, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, DomainError, NumericError, OrderingError
from .schedules import NoiseProcess, TimeGrid

__all__ = [
    "SolverConfig",
    "Trajectory",
    "euler_step",
    "euler_step_classic",
    "heun_step",
    "heun_step_fd",
    "dpm2_step",
    "dpm2_step_fd",
    "ab_weights",
    "ipndm_step",
    "simulate",
    "simulate_batch",
    "ode_jump",
    "simulate_zspace",
    "simulate_zspace_batch",
    "trajectory_length",
]

METHODS = ("euler", "heun", "dpm2", "ipndm")
_NFE = {"euler": 1, "heun": 2, "dpm2": 2, "ipndm": 1}


@dataclass(frozen=True)
class SolverConfig:
    method: str = "euler"
    max_order: int = 4
    record: bool = True
    variable_step: bool = True  # iPNDM weights for the actual sigma spacing

    def __post_init__(self):
        if self.method not in METHODS:
            raise DomainError(f"unknown solver method {self.method!r}; choose from {METHODS}")
        if not 1 <= int(self.max_order) <= 4:
            raise DomainError("ipndm order must lie in [1, 4]")

    @property
    def nfe_per_step(self) -> int:
        return _NFE[self.method]


@dataclass
class Trajectory:
    """A sampling trajectory and its coupled denoising trajectory.

    ``states[n]`` is the state at ``times[n]`` (descending, row 0 is the
    initial noise).  ``denoised[n]`` is the oracle output at ``states[n]``;
    for z-space trajectories it is the data-space posterior mean, so the
    relation ``states[n] / scales[n] = denoised[n] + sigmas[n] * eps`` holds.
    """

    times: TimeGrid
    states: np.ndarray
    denoised: np.ndarray | None
    eps_norms: np.ndarray
    sigmas: np.ndarray
    scales: np.ndarray
    method: str = "euler"
    oracle: str = ""
    nfe: int = 0
    meta: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.times.N

    @property
    def d(self) -> int:
        return self.states.shape[1]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def eps(self) -> np.ndarray:
        if self.denoised is None:
            raise DomainError("trajectory has no recorded denoising outputs")
        m = self.denoised.shape[0]
        x = self.states[:m] / self.scales[:m, None]
        return (x - self.denoised) / self.sigmas[:m, None]


# ---------------------------------------------------------------- single steps

def _check_pair(sigma_from, sigma_to, need_positive: bool = False) -> None:
    if not sigma_from > sigma_to:
        raise OrderingError(f"noise must decrease: sigma_from={sigma_from}, sigma_to={sigma_to}")
    if sigma_to < 0 or (need_positive and sigma_to <= 0):
        raise DomainError("target noise level must be positive for this method")


def _euler_from(x, r, sigma_from, sigma_to):
    a = sigma_to / sigma_from
    return a * x + (1.0 - a) * r


def euler_step(oracle, x, sigma_from: float, sigma_to: float) -> np.ndarray:
    """Euler step written as a convex combination of the state and its denoised value."""
    _check_pair(sigma_from, sigma_to)
    return _euler_from(np.asarray(x, dtype=float), oracle.denoise(x, sigma_from), sigma_from, sigma_to)


def euler_step_classic(oracle, x, sigma_from, sigma_to):
    _check_pair(sigma_from, sigma_to)
    x = np.asarray(x, dtype=float)
    eps = (x - oracle.denoise(x, sigma_from)) / sigma_from
    return x + (sigma_to - sigma_from) * eps


def _heun_from(oracle, x, r, sigma_from, sigma_to):
    h = sigma_to - sigma_from
    eps = (x - r) / sigma_from
    x1 = x + h * eps
    r1 = oracle.denoise(x1, sigma_to)
    eps1 = (x1 - r1) / sigma_to
    return x + 0.5 * h * (eps + eps1)


def heun_step(oracle, x, sigma_from: float, sigma_to: float) -> np.ndarray:
    """Heun's method: Euler predictor then trapezoidal corrector."""
    _check_pair(sigma_from, sigma_to, need_positive=True)
    x = np.asarray(x, dtype=float)
    return _heun_from(oracle, x, oracle.denoise(x, sigma_from), sigma_from, sigma_to)


def heun_step_fd(oracle, x, sigma_from, sigma_to):
    """Heun as an Euler-type convex step on a finite-difference extrapolated denoiser."""
    _check_pair(sigma_from, sigma_to, need_positive=True)
    x = np.asarray(x, dtype=float)
    a, h = sigma_to / sigma_from, sigma_to - sigma_from
    r = oracle.denoise(x, sigma_from)
    r1 = oracle.denoise(a * x + (1.0 - a) * r, sigma_to)
    slope = (sigma_from / sigma_to) * (r1 - r) / h
    return a * x + (1.0 - a) * (r + 0.5 * h * slope)


def _dpm2_from(oracle, x, r, sigma_from, sigma_to):
    s = np.sqrt(sigma_from * sigma_to)
    eps = (x - r) / sigma_from
    xs = x + (s - sigma_from) * eps
    eps_s = (xs - oracle.denoise(xs, s)) / s
    return x + (sigma_to - sigma_from) * eps_s


def dpm2_step(oracle, x, sigma_from: float, sigma_to: float) -> np.ndarray:
    """DPM-Solver-2: slope taken at the geometric-mean noise level."""
    _check_pair(sigma_from, sigma_to, need_positive=True)
    x = np.asarray(x, dtype=float)
    return _dpm2_from(oracle, x, oracle.denoise(x, sigma_from), sigma_from, sigma_to)


def dpm2_step_fd(oracle, x, sigma_from, sigma_to):
    _check_pair(sigma_from, sigma_to, need_positive=True)
    x = np.asarray(x, dtype=float)
    a, h = sigma_to / sigma_from, sigma_to - sigma_from
    s = np.sqrt(sigma_from * sigma_to)
    r = oracle.denoise(x, sigma_from)
    rs = oracle.denoise((s / sigma_from) * x + (1.0 - s / sigma_from) * r, s)
    slope = (sigma_from / s) * (rs - r) / (0.5 * h)
    return a * x + (1.0 - a) * (r + 0.5 * h * slope)


# ---------------------------------------------------------------- multistep

_AB_UNIFORM = {
    1: np.array([1.0]),
    2: np.array([3.0, -1.0]) / 2.0,
    3: np.array([23.0, -16.0, 5.0]) / 12.0,
    4: np.array([55.0, -59.0, 37.0, -9.0]) / 24.0,
}


def ab_weights(nodes: Sequence[float], sigma_to: float) -> np.ndarray:
    """Adams-Bashforth weights for arbitrary spacing.

    ``nodes`` are the noise levels of the available slopes, most recent
    first.  Returns ``w`` with ``x_next = x + sum_j w_j eps_j``; the
    weights integrate the Lagrange interpolant of the slopes from
    ``nodes[0]`` to ``sigma_to`` exactly.
    """
    nodes = np.asarray(nodes, dtype=float)
    h = sigma_to - nodes[0]
    u = (nodes - nodes[0]) / h  # normalised abscissae, step spans [0, 1]
    k = u.size
    w = np.empty(k)
    for j in range(k):
        poly = np.polynomial.Polynomial([1.0])
        for m in range(k):
            if m != j:
                poly = poly * np.polynomial.Polynomial([-u[m], 1.0]) / (u[j] - u[m])
        anti = poly.integ()
        w[j] = anti(1.0) - anti(0.0)
    return h * w


def _ipndm_weights(history_sigmas, sigma_from, sigma_to, order, variable):
    k = min(order, len(history_sigmas) + 1)
    if not variable:
        return (sigma_to - sigma_from) * _AB_UNIFORM[k]
    nodes = [sigma_from] + list(history_sigmas[::-1][: k - 1])
    return ab_weights(nodes, sigma_to)


def ipndm_step(oracle, history, x, sigma_from: float, sigma_to: float,
               order: int = 4, variable_step: bool = True) -> np.ndarray:
    """One improved-PNDM step with lower-order warm start.

    ``history`` is a sequence of ``(sigma, eps)`` pairs from previous steps,
    oldest first; at most the last three are used.
    """
    _check_pair(sigma_from, sigma_to)
    x = np.asarray(x, dtype=float)
    hist = list(history)[-3:]
    for _, e in hist:
        if np.shape(e) != x.shape:
            raise DimensionMismatchError("history slope shape differs from the state")
    eps = (x - oracle.denoise(x, sigma_from)) / sigma_from
    w = _ipndm_weights([s for s, _ in hist], sigma_from, sigma_to, order, variable_step)
    slopes = [eps] + [e for _, e in hist[::-1]]
    return x + sum(wj * ej for wj, ej in zip(w, slopes))


# ---------------------------------------------------------------- drivers

def _as_batch(oracle, x) -> tuple[np.ndarray, bool]:
    x = np.array(x, dtype=float)
    single = x.ndim == 1
    xb = x[None] if single else x
    if xb.ndim != 2 or xb.shape[1] != oracle.d:
        raise DimensionMismatchError(f"initial state dims {x.shape} do not match oracle d={oracle.d}")
    return xb, single


def _integrate(oracle, sigmas, scales, zb, cfg: SolverConfig, sigma_mid_scale=None):
    """Shared driver for x-space (scales == 1) and z-space sampling.

    Works on ``z = s x``; each step is the semi-linear update
    ``z' = (s'/s) z + s' * (increment of the VE state)``.  With all scales
    equal to one this is plain x-space integration.
    """
    n_steps = sigmas.size - 1
    B, d = zb.shape
    states = np.empty((n_steps + 1, B, d))
    rec = np.empty((n_steps + 1, B, d)) if cfg.record else None
    norms = np.empty((n_steps + 1, B))
    states[0] = zb
    z = zb
    history: list[tuple[float, np.ndarray]] = []
    nfe = 0
    xspace = np.all(scales == 1.0)

    def slope(zc, sig, sc):
        r = oracle.denoise(zc / sc if sc != 1.0 else zc, sig)
        return r, (zc - sc * r) / (sc * sig)

    r, eps = slope(z, sigmas[0], scales[0])
    nfe += 1
    for n in range(n_steps):
        sf, st = sigmas[n], sigmas[n + 1]
        cf, ct = scales[n], scales[n + 1]
        _check_pair(sf, st, need_positive=cfg.method in ("heun", "dpm2"))
        if rec is not None:
            rec[n] = r
        norms[n] = np.linalg.norm(eps, axis=1)
        h = st - sf
        ratio = ct / cf
        if cfg.method == "euler":
            if xspace:
                z = _euler_from(z, r, sf, st)
            else:
                z = ratio * z + ct * h * eps
        elif cfg.method == "heun":
            if xspace:
                z = _heun_from(oracle, z, r, sf, st)
            else:
                z1 = ratio * z + ct * h * eps
                _, eps1 = slope(z1, st, ct)
                z = ratio * z + ct * h * 0.5 * (eps + eps1)
            nfe += 1
        elif cfg.method == "dpm2":
            if xspace:
                z = _dpm2_from(oracle, z, r, sf, st)
            else:
                sm = np.sqrt(sf * st)
                cm = sigma_mid_scale(sm)
                zm = (cm / cf) * z + cm * (sm - sf) * eps
                _, eps_m = slope(zm, sm, cm)
                z = ratio * z + ct * h * eps_m
            nfe += 1
        else:
            w = _ipndm_weights([s for s, _ in history], sf, st, cfg.max_order, cfg.variable_step)
            slopes = [eps] + [e for _, e in history[::-1]]
            inc = sum(wj * ej for wj, ej in zip(w, slopes))
            z = z + inc if xspace else ratio * z + ct * inc
            history.append((sf, eps))
            history = history[-3:]
        if not np.all(np.isfinite(z)):
            raise NumericError(f"non-finite state after step {n + 1}")
        states[n + 1] = z
        if n + 1 < n_steps or (cfg.record and st > 0):
            r, eps = slope(z, st, ct)
            nfe += 1
        elif cfg.record:
            # a state at sigma = 0 is its own denoised value; no oracle call
            r, eps = z / ct, np.zeros_like(z)
    last = n_steps
    if cfg.record:
        rec[last] = r
        norms[last] = np.linalg.norm(eps, axis=1)
    else:
        norms = norms[:last]
    return states, rec, norms, nfe


def _split(grid, states, rec, norms, sigmas, scales, cfg, oracle, nfe, single, meta=None):
    B = states.shape[1]
    out = []
    for b in range(B):
        out.append(Trajectory(
            times=grid,
            states=states[:, b, :].copy(),
            denoised=None if rec is None else rec[:, b, :].copy(),
            eps_norms=norms[:, b].copy(),
            sigmas=np.asarray(sigmas, dtype=float).copy(),
            scales=np.asarray(scales, dtype=float).copy(),
            method=cfg.method,
            oracle=getattr(oracle, "descriptor", type(oracle).__name__),
            nfe=(sigmas.size - 1) * cfg.nfe_per_step,
            meta={"oracle_calls": nfe, **(meta or {})},
        ))
    return out[0] if single else out


def simulate_batch(oracle, grid: TimeGrid, x_init, cfg: SolverConfig | None = None) -> list[Trajectory]:
    """Integrate a batch of VE initial states, vectorised across the batch."""
    cfg = cfg or SolverConfig()
    xb, _ = _as_batch(oracle, x_init)
    sig = grid.times
    states, rec, norms, nfe = _integrate(oracle, sig, np.ones_like(sig), xb, cfg)
    return _split(grid, states, rec, norms, sig, np.ones_like(sig), cfg, oracle, nfe, False)


def simulate(oracle, grid: TimeGrid, x_init, cfg: SolverConfig | None = None):
    """Integrate the VE probability-flow ODE backwards along ``grid``.

    Returns a :class:`Trajectory` for a single ``(d,)`` initial state, or a
    list of them for a ``(B, d)`` batch.
    """
    xb, single = _as_batch(oracle, x_init)
    trajs = simulate_batch(oracle, grid, xb, cfg)
    return trajs[0] if single else trajs


def simulate_zspace_batch(oracle, process: NoiseProcess, grid: TimeGrid, z_init,
                          cfg: SolverConfig | None = None) -> list[Trajectory]:
    cfg = cfg or SolverConfig()
    process.check_times(grid.times)
    zb, _ = _as_batch(oracle, z_init)
    sig = np.asarray(process.sigma(grid.times), dtype=float)
    sc = np.asarray(process.s(grid.times), dtype=float)
    if np.any(np.diff(sig) >= 0):
        raise OrderingError("process noise levels must decrease along the grid")

    def mid_scale(sm):
        return float(process.s(process.time_of_sigma(sm)))

    if cfg.method == "dpm2" and process.sigma_inv is None:
        raise DomainError("dpm2 in z-space needs the process sigma inverse")
    states, rec, norms, nfe = _integrate(oracle, sig, sc, zb, cfg, sigma_mid_scale=mid_scale)
    return _split(grid, states, rec, norms, sig, sc, cfg, oracle, nfe, False,
                  meta={"process": process.kind})


def simulate_zspace(oracle, process: NoiseProcess, grid: TimeGrid, z_init, cfg: SolverConfig | None = None):
    """Semi-linear integration in the scaled variable ``z = s(t) x``.

    ``grid`` holds process times.  The result satisfies ``z_n = s_n x_n``
    where ``x`` is the VE trajectory on the noise levels ``sigma(t_n)``
    started from ``z_init / s(t_N)``.
    """
    zb, single = _as_batch(oracle, z_init)
    trajs = simulate_zspace_batch(oracle, process, grid, zb, cfg)
    return trajs[0] if single else trajs


def ode_jump(traj: Trajectory, n: int) -> np.ndarray:
    """Denoising output recorded at step ``n``; stops sampling early."""
    if traj.denoised is None:
        raise DomainError("trajectory has no recorded denoising outputs")
    if not 0 <= n < traj.denoised.shape[0]:
        raise IndexError(f"jump index {n} outside [0, {traj.denoised.shape[0]})")
    return traj.denoised[n].copy()


def trajectory_length(traj: Trajectory) -> float:
    """``sum_n (sigma_{n+1} - sigma_n) ||eps(x_{n+1})||`` over the visited slopes."""
    dsig = -np.diff(traj.sigmas)
    return float(np.sum(dsig * traj.eps_norms[: dsig.size]))
