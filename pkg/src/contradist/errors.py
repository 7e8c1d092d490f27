"""Exception types shared across the package."""


class ContradistError(Exception):
    """Base class for all package errors."""


class ValidationError(ContradistError):
    """Invalid argument, configuration, or dataset."""


class ShapeError(ContradistError):
    """Array shape inconsistent with the model or the batch."""


class NumericError(ContradistError):
    """A computation degenerated (zero denominator, non-finite value)."""


class CsvParseError(ContradistError):
    """Malformed dataset CSV; the message names the offending data row."""


class CheckpointError(ContradistError):
    """Unreadable or corrupt checkpoint file."""
