"""Exception types shared across the package."""


class MutrigError(Exception):
    """Base class for all package-specific errors."""


class ValidationError(MutrigError, ValueError):
    """Raised when measure parameters violate the admissibility constraints."""


class TableTooShallow(MutrigError):
    """A coefficient table does not reach the degree a request needs.

    ``required_n_max`` is the smallest table size that would suffice.
    """

    def __init__(self, message, required_n_max=None):
        super().__init__(message)
        self.required_n_max = required_n_max


class PrecisionExhausted(MutrigError):
    """Working precision is insufficient and the internal ladder gave up."""


class ScanInconclusive(MutrigError):
    """A certified sign could not be established over some interval."""


class ClusterUnresolved(MutrigError):
    """Two candidate roots are closer than the requested resolution.

    ``bracket`` is the enclosing interval that could not be split.
    """

    def __init__(self, message, bracket=None):
        super().__init__(message)
        self.bracket = bracket


class OverlapUnresolvable(MutrigError):
    """Certified intervals of two eigenvalues intersect ambiguously."""


class VerificationFailure(MutrigError):
    """A cross-check residual exceeded its certified bound."""
