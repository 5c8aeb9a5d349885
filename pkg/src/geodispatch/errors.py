"""Exception hierarchy shared across the package.

Each class carries the CLI exit code used when the error surfaces from a
subcommand: 1 usage/validation, 2 data, 3 numerical failure.
"""


class GeodispatchError(Exception):
    exit_code = 1


class ValidationError(GeodispatchError, ValueError):
    """A value violates a documented precondition or invariant."""

    exit_code = 1


class DataError(GeodispatchError):
    """A dataset, file, or stream is malformed or inconsistent."""

    exit_code = 2


class NumericalError(GeodispatchError, ArithmeticError):
    """A computation produced a non-finite result it cannot recover from."""

    exit_code = 3
