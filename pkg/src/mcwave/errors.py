"""Exception types shared across the package."""


class McwaveError(Exception):
    """Base class for all package-specific errors."""


class ConfigurationError(McwaveError):
    """Invalid resolutions, option combinations, or config files."""


class DomainError(McwaveError):
    """Invalid physical data (non-positive coefficients, bad inclusions)."""


class DegeneracyError(McwaveError):
    """A continuum vanishes on some coarse block, or constraints lose rank."""


class SingularSystemError(McwaveError):
    """A linear system factorization or solve failed."""
