"""Exception types shared across the package."""


class DomainError(ValueError):
    """Input lies outside the region where an operation is defined."""


class OracleError(RuntimeError):
    """Numerical quadrature did not reach the requested accuracy."""


class SolverError(RuntimeError):
    """Iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ConfigurationError(ValueError):
    """Inconsistent or incomplete model configuration."""


class SelectionError(LookupError):
    """No design satisfies the requested requirements."""

    def __init__(self, message, nearest=()):
        super().__init__(message)
        self.nearest = list(nearest)
