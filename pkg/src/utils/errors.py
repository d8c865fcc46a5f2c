class StoqBellError(Exception):
    """Base class for every error raised by stoqbell."""


class DomainError(StoqBellError, ValueError):
    """Argument outside the domain of a formula."""


class UnsupportedOperatorError(StoqBellError):
    pass


class ResourceLimitError(StoqBellError):
    """Full Hilbert-space work requested beyond the supported party count."""


class DegenerateGeometryError(StoqBellError):
    """Hyperplane matrix lost rank beyond the generic lineality.

    Retry the numeric path with ``strict=False`` (and a wider tolerance if needed).
    """


class AnalyticDegenerateError(StoqBellError):
    """A closed-form expression hit a vanishing denominator."""


class ContractViolationError(StoqBellError):
    pass


class NotPermutationInvariantError(StoqBellError):
    pass


class UsageError(StoqBellError):
    """Bad command-line input."""
