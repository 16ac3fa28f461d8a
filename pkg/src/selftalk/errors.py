"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage problems exit 1, DataError
exits 2, NumericalError exits 3.
"""


class SelfTalkError(Exception):
    """Base class for all package errors."""


class DataError(SelfTalkError):
    """Malformed input files, schema violations, dimension mismatches."""


class NumericalError(SelfTalkError):
    """Non-finite values where finite ones are required (loss, gradients)."""


class CheckpointError(DataError):
    """Unreadable or incompatible model checkpoint."""
