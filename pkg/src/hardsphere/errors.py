"""Exception types shared across the package."""


class HardSphereError(Exception):
    """Base class for all package errors."""


class UsageError(HardSphereError):
    """Invalid parameter combination or misuse of an API contract."""


class DegenerateTiltError(HardSphereError):
    """Exponential tilting is not applicable (constant radius law, or the
    target mean volume lies outside the attainable open interval)."""


class InsufficientDataError(HardSphereError):
    """Too few usable bins for a goodness-of-fit test."""


class StabilityViolationError(HardSphereError):
    """An acceptance probability left [0, 1]; the weight table does not
    dominate the proposal likelihood, which indicates a bug."""


class SamplerTimeoutError(HardSphereError):
    """An optional iteration or event cap was exceeded."""
