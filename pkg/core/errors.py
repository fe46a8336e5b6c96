"""Exception hierarchy shared by services and the CLI."""

from typing import Optional


class ReconError(Exception):
    """Base class for all errors raised by this package."""


class InputError(ReconError, ValueError):
    """A precondition on the inputs does not hold (sizes, dimensions, ranges)."""


class ReportExistsError(InputError):
    """The output directory already holds a report or other files and --force was not given."""


class NumericError(ReconError, ArithmeticError):
    """A computation produced a non-finite value.

    Args:
        message: Human readable description
        where: Location of the failure (tape node, integrator step, epoch)
    """

    def __init__(self, message: str, where: Optional[str] = None):
        self.where = where
        if where is not None:
            message = f"{message} (at {where})"
        super().__init__(message)
