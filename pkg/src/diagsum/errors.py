"""Exception hierarchy shared across the package.

Exit codes used by the CLI: 0 success, 2 validation, 3 capacity, 4 I/O.
"""


class DiagsumError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ValidationError(DiagsumError):
    """Bad arguments: odd orders, unsorted times, malformed config, ..."""

    exit_code = 2


class CapacityError(DiagsumError):
    """A request exceeds an enumeration or workspace cap."""

    exit_code = 3


class OutputError(DiagsumError):
    """I/O failure, reported with the offending path."""

    exit_code = 4
