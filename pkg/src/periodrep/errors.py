"""Exception hierarchy.

Data problems (bad files, bad grids) and numerical problems (singular
matrices, overflow, model singularities) are kept apart so the CLI can map
them to distinct exit codes.
"""

from __future__ import annotations


class PeriodrepError(Exception):
    """Base class for all package errors."""


class DataError(PeriodrepError):
    """Input data could not be used."""


class ParseError(DataError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class GridError(DataError):
    """Sample times are not a valid uniform grid."""


class NumericError(PeriodrepError):
    """A numerical computation failed or produced non-finite values."""

    def __init__(self, message: str, index: int | None = None):
        self.index = index
        if index is not None:
            message = f"{message} (grid index {index})"
        super().__init__(message)


class DomainError(NumericError):
    """A model was evaluated outside the set where it is defined."""

    def __init__(self, message: str, parameter: str | None = None, index: int | None = None):
        self.parameter = parameter
        if parameter is not None:
            message = f"{message} [parameter {parameter}]"
        super().__init__(message, index)


class SingularPeriodError(NumericError):
    """The q-subsystem is not contracting over one period."""


class StabilityError(NumericError):
    """The periodic q solution is not exponentially stable."""


class RepresentationUnavailable(NumericError):
    """I - Phi(t0+T, t0) is singular, so R cannot be formed."""


class IntegrationBlowUp(NumericError):
    """A fixed-step integration produced non-finite values."""


class SimulationError(NumericError):
    """A model simulation left its admissible region."""
