class DomainError(ValueError):
    """Raised when an input lies outside the domain of a model operation."""


class ConfigError(RuntimeError):
    """Raised when required configuration is missing or invalid."""


class CouplingUnavailableError(RuntimeError):
    """Raised when sampled weights miss the regularity event needed for coupling."""


class EstimationError(RuntimeError):
    """Raised when a numerical estimate cannot be produced reliably."""
