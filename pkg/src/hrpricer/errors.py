"""Exception hierarchy shared by every module."""

import os
import traceback


class HRPricerError(Exception):
    """Base class for all package errors."""


class DomainError(HRPricerError, ValueError):
    """An argument lies outside the mathematical domain of an operation."""


class ConfigurationError(HRPricerError, ValueError):
    """A numerical configuration is invalid or inadmissible."""


class SimulationError(HRPricerError, ArithmeticError):
    """A simulated state became non-finite."""

    def __init__(self, message, path=None, step=None):
        super().__init__(message)
        self.path = path
        self.step = step


class PositivityError(SimulationError):
    """The plain Euler scheme produced a non-positive state."""


class SolverError(HRPricerError, RuntimeError):
    """An iterative solver failed to converge."""

    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


class ExtrapolationError(HRPricerError, ValueError):
    """A query falls outside the grid that backs an interpolant."""


class BoundaryNotBracketedError(HRPricerError, RuntimeError):
    """No exercise/continuation sign change was found in a grid column."""

    def __init__(self, message, column=None):
        super().__init__(message)
        self.column = column


def failing_module(exc: BaseException) -> str:
    """Name of the innermost package module in the traceback of ``exc``."""
    here = os.path.dirname(os.path.abspath(__file__))
    name = "unknown"
    for frame in traceback.extract_tb(exc.__traceback__):
        path = os.path.abspath(frame.filename)
        if os.path.dirname(path) == here:
            name = os.path.splitext(os.path.basename(path))[0]
    return name
