"""Noise processes and sampling time schedules.

A noise process is the pair ``(s(t), sigma(t))`` of a linear diffusion,
``x_t = s(t) x_0 + s(t) sigma(t) z``.  Time schedules are stored in
sampling order, i.e. strictly *decreasing*.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DomainError, InvalidRangeError, OrderingError

__all__ = [
    "NoiseProcess",
    "TimeGrid",
    "ve_process",
    "vp_process",
    "vp_process_from_range",
    "flow_matching_process",
    "polynomial_grid",
    "logsnr_grid",
    "vp_uniform_grid",
    "explicit_grid",
    "make_grid",
]

_KINDS = ("VE", "VP", "flow-matching", "custom")


@dataclass(frozen=True)
class NoiseProcess:
    """Linear diffusion ``dx = f(t) x dt + g(t) dw`` described by (s, sigma).

    Parameters
    ----------
    kind : str
        One of ``VE``, ``VP``, ``flow-matching``, ``custom``.
    s, sigma : callable
        Vectorised maps from time to scale and noise level.
    T : float
        Terminal time.
    sigma_inv : callable, optional
        Inverse of ``sigma``; lets a schedule in noise levels be mapped back
        to process time.
    t_min : float
        Lower end of the time domain (0 unless the parameterisation is only
        valid on ``[t_min, T]``).
    """

    kind: str
    s: Callable[[np.ndarray], np.ndarray]
    sigma: Callable[[np.ndarray], np.ndarray]
    T: float
    sigma_inv: Callable[[np.ndarray], np.ndarray] | None = None
    params: dict = field(default_factory=dict)
    t_min: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown process kind {self.kind!r}")
        if not self.T > 0:
            raise DomainError("terminal time must be positive")

    def snr(self, t):
        sig = np.asarray(self.sigma(np.asarray(t, dtype=float)))
        return 1.0 / sig**2

    def time_of_sigma(self, sig):
        if self.sigma_inv is None:
            raise DomainError(f"process {self.kind} has no sigma inverse")
        return self.sigma_inv(np.asarray(sig, dtype=float))

    def check_times(self, times) -> None:
        t = np.asarray(times, dtype=float)
        if np.any(t < self.t_min) or np.any(t > self.T):
            raise DomainError(f"times outside [{self.t_min}, {self.T}] for {self.kind} process")
        if self.kind == "flow-matching" and np.any(t >= self.T):
            raise DomainError("flow-matching grids need t_N < T (sigma diverges at T)")
        sv = np.asarray(self.s(t))
        if np.any(~np.isfinite(sv)) or np.any(sv <= 0):
            raise DomainError("scale s(t) must be positive and finite on the grid")


def ve_process(T: float = 80.0) -> NoiseProcess:
    return NoiseProcess(
        "VE",
        s=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        sigma=lambda t: np.asarray(t, dtype=float),
        T=T,
        sigma_inv=lambda sg: np.asarray(sg, dtype=float),
    )


def vp_process(beta_d: float = 19.9, beta_min: float = 0.1, t_min: float = 0.0) -> NoiseProcess:
    """VP-SDE with linear beta, time in [0, 1].

    ``sigma(t) = sqrt(exp(beta_d t^2 / 2 + beta_min t) - 1)`` and
    ``s(t) = 1 / sqrt(1 + sigma(t)^2)``, i.e. ``s = sqrt(alpha_t)`` and
    ``sigma = sqrt((1 - alpha_t) / alpha_t)``.
    """

    def sigma(t):
        t = np.asarray(t, dtype=float)
        return np.sqrt(np.expm1(0.5 * beta_d * t**2 + beta_min * t))

    def s(t):
        t = np.asarray(t, dtype=float)
        return np.exp(-0.5 * (0.5 * beta_d * t**2 + beta_min * t))

    def sigma_inv(sg):
        c = np.log1p(np.asarray(sg, dtype=float) ** 2)
        return (np.sqrt(beta_min**2 + 2.0 * beta_d * c) - beta_min) / beta_d

    return NoiseProcess("VP", s=s, sigma=sigma, T=1.0, sigma_inv=sigma_inv,
                        params={"beta_d": beta_d, "beta_min": beta_min}, t_min=t_min)


def _vp_betas(t0: float, tN: float, eps_s: float) -> tuple[float, float]:
    # chosen so that sigma(eps_s) = t0 and sigma(1) = tN
    beta_d = 2.0 * (np.log1p(t0**2) / eps_s - np.log1p(tN**2)) / (eps_s - 1.0)
    beta_min = np.log1p(tN**2) - 0.5 * beta_d
    return float(beta_d), float(beta_min)


def vp_process_from_range(t0: float = 0.002, tN: float = 80.0, eps_s: float = 1e-3) -> NoiseProcess:
    """VP process whose betas map ``[eps_s, 1]`` onto noise levels ``[t0, tN]``."""
    return vp_process(*_vp_betas(t0, tN, eps_s), t_min=eps_s)


def flow_matching_process(T: float = 1.0) -> NoiseProcess:
    """Rectified-flow interpolation ``x_t = (1 - t/T) x_0 + (t/T) z``."""
    return NoiseProcess(
        "flow-matching",
        s=lambda t: 1.0 - np.asarray(t, dtype=float) / T,
        sigma=lambda t: np.asarray(t, dtype=float) / (T - np.asarray(t, dtype=float)),
        T=T,
        sigma_inv=lambda sg: T * np.asarray(sg, dtype=float) / (1.0 + np.asarray(sg, dtype=float)),
    )


class TimeGrid:
    """Strictly decreasing sampling times ``t_N > ... > t_0``."""

    __slots__ = ("_times", "kind")

    def __init__(self, times: Sequence[float], kind: str = "explicit"):
        t = np.array(times, dtype=float).ravel()
        if t.size < 2:
            raise OrderingError("a time grid needs at least two times")
        if not np.all(np.isfinite(t)):
            raise OrderingError("time grid contains non-finite values")
        if np.any(np.diff(t) >= 0):
            raise OrderingError("time grid must be strictly decreasing")
        if t[-1] < 0:
            raise InvalidRangeError("times must be nonnegative")
        t.setflags(write=False)
        self._times = t
        self.kind = kind

    @property
    def times(self) -> np.ndarray:
        return self._times

    @property
    def N(self) -> int:
        return self._times.size - 1

    def __len__(self):
        return self._times.size

    def __getitem__(self, i):
        return self._times[i]

    def __iter__(self):
        return iter(self._times)

    def __eq__(self, other):
        return isinstance(other, TimeGrid) and np.array_equal(self._times, other._times)

    def __repr__(self):
        body = ", ".join(f"{v:.4f}" for v in self._times)
        return f"TimeGrid[{self.kind}]({body})"

    def to_dict(self) -> dict:
        return {"kind": self.kind, "times": [float(v) for v in self._times]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, obj: dict) -> "TimeGrid":
        try:
            return cls(obj["times"], kind=str(obj.get("kind", "explicit")))
        except (KeyError, TypeError) as exc:
            raise OrderingError(f"malformed schedule object: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "TimeGrid":
        return cls.from_dict(json.loads(text))


def _check_range(N: int, t0: float, tN: float) -> None:
    if int(N) != N or N < 1:
        raise InvalidRangeError("N must be a positive integer")
    if not (t0 > 0 and t0 < tN):
        raise InvalidRangeError(f"need 0 < t0 < tN, got t0={t0}, tN={tN}")


def _finish(asc: np.ndarray, t0: float, tN: float, kind: str) -> TimeGrid:
    asc[0], asc[-1] = t0, tN
    return TimeGrid(asc[::-1].copy(), kind=kind)


def polynomial_grid(N: int, t0: float = 0.002, tN: float = 80.0, rho: float = 7.0) -> TimeGrid:
    """EDM-style polynomial schedule.

    ``t_n = (t0^(1/rho) + n/N (tN^(1/rho) - t0^(1/rho)))^rho``, emitted
    from ``tN`` down to ``t0``.
    """
    _check_range(N, t0, tN)
    if not rho > 0:
        raise InvalidRangeError("rho must be positive")
    frac = np.arange(N + 1) / N
    a, b = t0 ** (1.0 / rho), tN ** (1.0 / rho)
    asc = (a + frac * (b - a)) ** rho
    return _finish(asc, t0, tN, f"polynomial(rho={rho:g})")


def logsnr_grid(N: int, t0: float = 0.002, tN: float = 80.0) -> TimeGrid:
    """Uniform in ``lambda = -log t``; a geometric sequence in t."""
    _check_range(N, t0, tN)
    lam = np.linspace(-np.log(t0), -np.log(tN), N + 1)
    return _finish(np.exp(-lam), t0, tN, "logsnr")


def vp_uniform_grid(N: int, t0: float = 0.002, tN: float = 80.0, eps_s: float = 1e-3) -> TimeGrid:
    """Uniform VP time ``tau`` in ``[eps_s, 1]`` mapped to noise levels."""
    _check_range(N, t0, tN)
    if not 0 < eps_s < 1:
        raise InvalidRangeError("eps_s must lie in (0, 1)")
    beta_d, beta_min = _vp_betas(t0, tN, eps_s)
    tau = np.linspace(eps_s, 1.0, N + 1)
    asc = np.sqrt(np.expm1(0.5 * beta_d * tau**2 + beta_min * tau))
    return TimeGrid(asc[::-1].copy(), kind="vp-uniform")


def explicit_grid(times: Sequence[float]) -> TimeGrid:
    return TimeGrid(times, kind="explicit")


def make_grid(spec: str, N: int, t0: float = 0.002, tN: float = 80.0) -> TimeGrid:
    """Build a grid from a short name: ``polynomial[:rho]``, ``logsnr``,
    ``uniform``/``vp-uniform``, or a path to a schedule JSON file."""
    name, _, arg = spec.partition(":")
    name = name.lower()
    if name in ("polynomial", "poly", "edm"):
        return polynomial_grid(N, t0, tN, float(arg) if arg else 7.0)
    if name in ("logsnr", "log-snr"):
        return logsnr_grid(N, t0, tN)
    if name in ("uniform", "vp-uniform", "vp_uniform"):
        return vp_uniform_grid(N, t0, tN, float(arg) if arg else 1e-3)
    try:
        with open(spec, "r", encoding="utf-8") as fh:
            return TimeGrid.from_dict(json.load(fh))
    except FileNotFoundError as exc:
        raise InvalidRangeError(f"unknown schedule spec {spec!r}") from exc
