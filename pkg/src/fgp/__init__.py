"""Functionally generated portfolios, replicability tests and option pricing by homogenisation."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    BoundednessError,
    ConfigError,
    DifferentiationError,
    DomainError,
    FgpError,
    OracleError,
    PipelineRejected,
    PositivityError,
    SimulationError,
)
from .genfun import GeneratingFunction, extend_simplex_function, homogenize  # noqa: E402
from .market_sim import MarketModel, PricePath, covariance, simulate_path, simulate_paths  # noqa: E402
from .portfolio_engine import integrate_value, weights_at  # noqa: E402
from .replication import ClaimProblem, bs_call, pde_residual, three_step_price  # noqa: E402

__all__ = [
    "BoundednessError", "ClaimProblem", "ConfigError", "DifferentiationError", "DomainError",
    "FgpError", "GeneratingFunction", "MarketModel", "OracleError", "PipelineRejected",
    "PositivityError", "PricePath", "SimulationError", "bs_call", "covariance",
    "extend_simplex_function", "homogenize", "integrate_value", "pde_residual",
    "simulate_path", "simulate_paths", "three_step_price", "weights_at",
]
