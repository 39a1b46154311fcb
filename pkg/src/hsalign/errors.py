"""Exception types shared across the package."""


class HsAlignError(Exception):
    """Base class for all package errors."""


class InputError(HsAlignError, ValueError):
    """Malformed or inconsistent user input (shapes, files, parameters)."""


class BandwidthError(HsAlignError, ValueError):
    """A bandwidth could not be derived, e.g. a projected dimension has no spread."""


class RetractionError(HsAlignError, ArithmeticError):
    """The QR retraction met a numerically rank-deficient candidate."""


class NonFiniteError(HsAlignError, ArithmeticError):
    """A function evaluation returned NaN or infinity."""
