"""Exception types shared across the package."""


class SatconvError(Exception):
    """Base class for all satconv errors."""


class InvalidRatioError(SatconvError, ValueError):
    """Requantization ratio outside (0, 2]."""


class ValidationError(SatconvError, ValueError):
    """A model, tensor or plan violates a structural invariant."""


class FormatError(SatconvError, ValueError):
    """An on-disk artifact is malformed (bad magic, bad JSON, bad lengths)."""


class PlanMismatchError(SatconvError, ValueError):
    """A kernel plan does not fit the model or layer it is applied to."""


class InvariantViolation(SatconvError, RuntimeError):
    """An internal guarantee failed (e.g. sat output differs from baseline)."""
