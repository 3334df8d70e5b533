"""
Exception hierarchy shared by all modules of the package.
"""

import typing as t
from dataclasses import dataclass, field

try:
    from termcolor import colored
except ImportError:

    def colored(s, *a, **kw) -> str:  # type: ignore
        return str(s)


class DpsgldError(Exception):
    """Base class for all errors raised by this package."""


class InvalidInputError(DpsgldError, ValueError):
    """An argument is outside of the domain of the operation (non-finite values, labels out of range, ...)."""


class PreconditionError(DpsgldError):
    """The hypothesis of a privacy or utility bound does not hold for the supplied parameters."""


class NumericError(DpsgldError):
    """A numeric routine (eigen-solver, sampler) failed to produce a usable value."""


class InfeasibleCalibrationError(DpsgldError):
    """The requested privacy target cannot be reached with a positive number of iterations."""


class ConvergenceError(DpsgldError):
    """An iterative solver did not reach its tolerance within its iteration budget."""


class ConfigurationError(DpsgldError):
    """A run configuration is inconsistent or cannot be verified."""


@dataclass
class NumericDivergenceError(DpsgldError):
    """
    Raised by the trainers when an iterate becomes non-finite or grows far outside of the projection ball
    before projection. This usually means the loss constants were mis-set.
    """

    #: The iteration index *k* of the update that produced the offending iterate.
    iteration: int

    #: The L2 norm of the iterate before projection (may be `nan` or `inf`).
    norm: float

    #: The radius of the projection ball.
    radius: float

    def __str__(self) -> str:
        return (
            f"iterate diverged at iteration {self.iteration}: norm {self.norm:.6g} before projection "
            f"(ball radius {self.radius:.6g})"
        )


@dataclass
class ParseError(DpsgldError):
    """
    Error while parsing an input file. Rendered with the file name, line number and the offending line.
    """

    message: str
    filename: str
    line: int
    text: str = ""

    def __str__(self) -> str:
        lines = [
            "",
            f'  in {colored(self.filename, "blue")} at line {self.line}: {colored(self.message, "red")}',
        ]
        if self.text:
            lines.append("  |" + self.text.rstrip("\n"))
        return "\n".join(lines)


@dataclass
class VerificationError(DpsgldError):
    """
    An oracle check failed. The full report that led to the failure is attached.
    """

    #: Name of the failed assertion.
    assertion: str

    #: Human readable description of the violated inequality.
    message: str

    #: The report object (or its JSON-compatible dump) of the failing check.
    report: t.Any = field(default=None, repr=False)

    def __str__(self) -> str:
        return f"{self.assertion}: {self.message}"
