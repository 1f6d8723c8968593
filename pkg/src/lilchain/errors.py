"""Exception types shared across the package."""


class LilchainError(Exception):
    """Base class for package errors."""


class DomainError(LilchainError, ValueError):
    """A state does not belong to the kernel's state space."""


class ValidationError(LilchainError, ValueError):
    """An input violates a declared invariant (non-metric cost, bad s_n^2, ...)."""


class NoGapCertified(LilchainError):
    """The contraction fit did not produce a rate below one.

    ``diagnostics`` holds the per-horizon ratio table so callers can report
    what was observed instead of a certificate.
    """

    def __init__(self, message, diagnostics=None, gamma=None):
        super().__init__(message)
        self.diagnostics = diagnostics or []
        self.gamma = gamma


class NonUniqueStationary(LilchainError):
    """The invariance equations admit more than one probability solution."""


class DegenerateVariance(LilchainError):
    """The asymptotic variance vanishes, so the LIL normalization is undefined."""


class CenteringError(LilchainError, ValueError):
    """An observable is not centered under the stationary measure."""


class ConfigError(LilchainError, ValueError):
    """Malformed experiment configuration."""


class ReplayError(LilchainError):
    """A report cannot be replayed (wrong version or missing provenance)."""
