"""Exception types shared across the package."""


class CoresiftError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(CoresiftError):
    """An input violates a documented precondition or invariant."""


class FormatError(CoresiftError):
    """A file does not look like the expected format (bad magic/version)."""


class CorruptionError(FormatError):
    """A file has the right format markers but inconsistent contents."""


class ParseError(CoresiftError):
    """A text record could not be parsed; message carries the line number."""


class StorageError(CoresiftError):
    """An I/O failure; message carries the offending path."""


class NumericError(CoresiftError):
    """A non-finite value appeared where finite math was required."""


class UndefinedMetricError(CoresiftError):
    """A statistic is undefined for the given input (e.g. constant vector)."""
