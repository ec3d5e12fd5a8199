"""Counter-mode seed splitting.

Trajectory ``i`` of a run seeded with ``seed`` always draws from
``SeedSequence(seed, spawn_key=(i,))`` so enlarging a batch never changes
earlier trajectories.
"""
from __future__ import annotations

import numpy as np

from .errors import ConfigError

__all__ = ["check_seed", "stream", "draw_initial_noise"]

_STREAM_NOISE = 0
_STREAM_WARMUP = 1


def check_seed(seed) -> int:
    try:
        s = int(seed)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"seed must be an integer, got {seed!r}") from exc
    if s < 0 or s >= 2**64:
        raise ConfigError("seed must be a 64-bit unsigned integer")
    return s


def stream(seed: int, index: int, purpose: int = _STREAM_NOISE) -> np.random.Generator:
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=(purpose, int(index)))
    return np.random.default_rng(ss)


def draw_initial_noise(d: int, sigma_T: float, count: int, seed: int, purpose: int = _STREAM_NOISE) -> np.ndarray:
    """``count`` draws of ``N(0, sigma_T^2 I_d)``, one independent stream per row."""
    out = np.empty((count, d))
    for i in range(count):
        out[i] = sigma_T * stream(seed, i, purpose).standard_normal(d)
    return out
