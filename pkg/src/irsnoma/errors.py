"""Exception types shared across the package."""


class ContractViolation(ValueError):
    """Input does not satisfy a documented precondition."""


class DomainError(ValueError):
    """Argument lies outside the mathematical domain of the operation."""


class NotPSDError(ValueError):
    """Matrix expected to be positive semidefinite has a significant negative eigenvalue."""


class NumericalFailure(RuntimeError):
    """An iterative method failed to reach the requested accuracy."""


class ConfigError(ValueError):
    """Experiment configuration is malformed."""
