"""Exception types mapped to CLI exit codes."""


class BhhmError(Exception):
    """Base class for threshold-estimation errors."""

    exit_code = 1


class InputError(BhhmError, ValueError):
    """Malformed or inconsistent input (files, flags, parameters)."""

    exit_code = 1


class NumericalError(BhhmError, RuntimeError):
    """A computation could not produce a finite, usable result."""

    exit_code = 2
