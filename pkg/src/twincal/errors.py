"""Exception types shared across the package.

The CLI maps :class:`ValidationError` to exit code 2 and
:class:`DegeneracyError` to exit code 3.
"""


class TwinCalError(Exception):
    """Base class for all package errors."""


class ValidationError(TwinCalError, ValueError):
    """A precondition on inputs, parameters or file contents was violated."""


class DegeneracyError(TwinCalError, ArithmeticError):
    """The data do not support the requested estimate (zero variance, no peak, ...)."""
