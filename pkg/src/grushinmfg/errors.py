"""Exception types shared across the package."""


class GrushinError(Exception):
    """Base class for all package errors."""


class ConfigurationError(GrushinError, ValueError):
    """Malformed parameters: bad variant data, invalid witness, bad config keys."""


class DomainError(GrushinError, ValueError):
    """Valid configuration applied to inputs outside its domain."""


class UnsupportedWitnessError(DomainError):
    """No admissible connecting construction is available at the requested target."""


class SolverError(GrushinError, RuntimeError):
    """Internal solver failure that should not occur on well-posed inputs."""
