"""Geometry-inspired time scheduling.

A teacher solver is run once per warmup sample along a fine grid.  The
cost of jumping from fine node ``i`` to node ``j`` is the mean distance
between a single Euler step from the teacher's state at ``i`` and the
teacher's state at ``j``.  A dynamic program then picks the ``N``-step
path through the fine grid with the least discounted cost.

Indices follow sampling order: node 0 is the largest time ``t_N`` and node
``G-1`` is ``t_0``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DimensionMismatchError, DomainError, InfeasibleBudgetError
from .schedules import TimeGrid, polynomial_grid
from .seeding import check_seed, draw_initial_noise, _STREAM_WARMUP
from .solvers import SolverConfig, simulate_batch

__all__ = ["CostMatrix", "DpResult", "DpTable", "build_cost_matrix", "dp_table",
           "dp_schedule", "gits_pipeline", "path_cost"]


@dataclass
class CostMatrix:
    grid: TimeGrid
    costs: np.ndarray  # (G, G); +inf below and on the diagonal
    warmup: int

    @property
    def G(self) -> int:
        return len(self.grid)


@dataclass
class DpResult:
    indices: np.ndarray
    schedule: TimeGrid
    cost: float
    gamma: float


def _l2(a, b):
    return np.linalg.norm(a - b, axis=-1)


def build_cost_matrix(oracle, fine_grid: TimeGrid, warmup, teacher_cfg: SolverConfig | None = None,
                      metric: Callable[[np.ndarray, np.ndarray], np.ndarray] = _l2) -> CostMatrix:
    """Average local truncation error of an Euler jump between every pair of fine nodes.

    ``warmup`` is a ``(B, d)`` batch of initial states at ``fine_grid[0]``.
    ``metric(a, b)`` maps two ``(B, d)`` arrays to ``(B,)`` distances.
    """
    teacher_cfg = teacher_cfg or SolverConfig("ipndm", record=True)
    W = np.atleast_2d(np.asarray(warmup, dtype=float))
    if W.shape[0] < 1:
        raise DomainError("need at least one warmup sample")
    if W.shape[1] != oracle.d:
        raise DimensionMismatchError("warmup dimension does not match the oracle")
    if not teacher_cfg.record:
        teacher_cfg = SolverConfig(teacher_cfg.method, teacher_cfg.max_order, True, teacher_cfg.variable_step)
    trajs = simulate_batch(oracle, fine_grid, W, teacher_cfg)
    S = np.stack([t.states for t in trajs], axis=1)      # (G, B, d)
    R = np.stack([t.denoised for t in trajs], axis=1)    # denoised at teacher states
    sig = fine_grid.times
    G = sig.size
    C = np.full((G, G), np.inf)
    for i in range(G - 1):
        for j in range(i + 1, G):
            a = sig[j] / sig[i]
            cand = a * S[i] + (1.0 - a) * R[i]
            C[i, j] = float(np.mean(metric(cand, S[j])))
    return CostMatrix(grid=fine_grid, costs=C, warmup=W.shape[0])


@dataclass
class DpTable:
    """Value table ``V[j, k]``: best discounted cost from node ``j`` to the last node in ``k`` steps."""

    V: np.ndarray
    nxt: np.ndarray
    gamma: float
    grid: TimeGrid | None = None

    def extract(self, N: int) -> DpResult:
        G = self.V.shape[0]
        if not 1 <= N <= self.V.shape[1] - 1:
            raise InfeasibleBudgetError(f"budget {N} not covered by this table")
        if N > G - 1:
            raise InfeasibleBudgetError(f"budget {N} exceeds fine grid steps {G - 1}")
        path = [0]
        m = 0
        for k in range(N, 0, -1):
            m = int(self.nxt[m, k])
            path.append(m)
        idx = np.array(path)
        times = self.grid.times[idx] if self.grid is not None else idx.astype(float)
        sched = TimeGrid(times, kind=f"gits(gamma={self.gamma:g})") if self.grid is not None else None
        return DpResult(indices=idx, schedule=sched, cost=float(self.V[0, N]), gamma=self.gamma)


def dp_table(C, N: int, gamma: float = 1.15) -> DpTable:
    """One pass of the discounted min-cost-path recursion for all budgets up to ``N``.

    ``V[j, 1] = c[j, G-1]`` and ``V[j, k] = min_{i>j} gamma c[j, i] + V[i, k-1]``;
    the final jump is undiscounted.  Ties go to the smallest next index.
    """
    grid = C.grid if isinstance(C, CostMatrix) else None
    c = np.asarray(C.costs if isinstance(C, CostMatrix) else C, dtype=float)
    G = c.shape[0]
    if c.shape != (G, G):
        raise DimensionMismatchError("cost matrix must be square")
    if not gamma > 0:
        raise DomainError("gamma must be positive")
    if N < 1 or N + 1 > G:
        raise InfeasibleBudgetError(f"need 1 <= N <= G-1, got N={N}, G={G}")
    last = G - 1
    V = np.full((G, N + 1), np.inf)
    nxt = np.full((G, N + 1), -1, dtype=int)
    V[last, 0] = 0.0
    for j in range(last):
        V[j, 1] = c[j, last]
        nxt[j, 1] = last
    for k in range(2, N + 1):
        for j in range(last - k + 1):
            cand = gamma * c[j, j + 1:last] + V[j + 1:last, k - 1]
            i = int(np.argmin(cand))  # first minimum = smallest index
            if np.isfinite(cand[i]):
                V[j, k] = cand[i]
                nxt[j, k] = j + 1 + i
    return DpTable(V=V, nxt=nxt, gamma=float(gamma), grid=grid)


def dp_schedule(C, N: int, gamma: float = 1.15) -> DpResult:
    return dp_table(C, N, gamma).extract(N)


def path_cost(c, path, gamma: float) -> float:
    """Discounted cost of an explicit index path, for checking the DP."""
    c = np.asarray(getattr(c, "costs", c))
    hops = [c[a, b] for a, b in zip(path[:-1], path[1:])]
    # same association as the DP so both routes agree bit for bit
    v = hops[-1]
    for h in reversed(hops[:-1]):
        v = gamma * h + v
    return float(v)


def gits_pipeline(oracle, N: int, gamma: float = 1.15, fine_N: int = 60,
                  teacher_cfg: SolverConfig | None = None, warmup_count: int = 256, seed: int = 0,
                  t0: float = 0.002, tN: float = 80.0, rho: float = 7.0,
                  return_costs: bool = False):
    """Full recipe: polynomial fine grid, teacher pass, cost matrix and DP."""
    check_seed(seed)
    fine = polynomial_grid(fine_N, t0, tN, rho)
    W = draw_initial_noise(oracle.d, tN, warmup_count, seed, purpose=_STREAM_WARMUP)
    cm = build_cost_matrix(oracle, fine, W, teacher_cfg or SolverConfig("ipndm"))
    res = dp_schedule(cm, N, gamma)
    return (res, cm) if return_costs else res
