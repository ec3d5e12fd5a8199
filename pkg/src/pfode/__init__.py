"""Deterministic probability-flow ODE sampling under closed-form score oracles."""

__version__ = "0.1.0"

from .errors import ConfigError, NumericError, PfodeError  # noqa: E402
from .schedules import (NoiseProcess, TimeGrid, explicit_grid, flow_matching_process,  # noqa: E402
                        logsnr_grid, polynomial_grid, ve_process, vp_process, vp_uniform_grid)
from .oracles import (Dataset, DenoiseResult, GaussianOracle, KDEOracle, LowRankGaussian,  # noqa: E402
                      MixtureOracle)
from .solvers import SolverConfig, Trajectory, simulate, simulate_zspace, ode_jump  # noqa: E402
