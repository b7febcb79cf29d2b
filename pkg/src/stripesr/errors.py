"""Exception hierarchy shared by all stripesr modules."""


class StripeSrError(Exception):
    """Base class for every error raised by this package."""


class ContractViolation(StripeSrError, ValueError):
    """An argument broke a documented precondition (shapes, ranges, flags)."""


class NumericError(StripeSrError, ArithmeticError):
    """A computation produced or required a non-finite / degenerate value."""


class FormatError(StripeSrError, ValueError):
    """A file or byte stream does not match its declared container format."""
