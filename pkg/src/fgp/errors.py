"""Exception types raised across the package."""


class FgpError(Exception):
    """Base class for all errors raised by fgp."""


class DomainError(FgpError, ValueError):
    """An argument lies outside the domain of a function (e.g. a nonpositive price)."""


class PositivityError(FgpError, ValueError):
    """A generating function returned a nonpositive value."""


class DifferentiationError(FgpError, ArithmeticError):
    """A finite-difference quotient was not finite."""


class BoundednessError(FgpError, ValueError):
    """A portfolio weight exceeded the configured bound."""


class SimulationError(FgpError, ArithmeticError):
    """A simulated price overflowed or otherwise became non-finite."""


class OracleError(FgpError, ArithmeticError):
    """The heat-kernel quadrature failed to converge."""


class PipelineRejected(FgpError):
    """The three-step pricing pipeline rejected a step-1 solution.

    The offending residual reports are attached as ``reports``.
    """

    def __init__(self, message, reports=None):
        super().__init__(message)
        self.reports = reports or {}


class ConfigError(FgpError, ValueError):
    """An experiment configuration is invalid; ``field`` names the culprit."""

    def __init__(self, field, message):
        super().__init__(f"{field}: {message}")
        self.field = field
