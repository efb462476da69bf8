"""Exception types raised by shiftdiag."""

import numpy as np


class ShiftDiagError(Exception):
    """Base class for all errors raised by this package."""


class NullSetError(ShiftDiagError, ValueError):
    """Raised when a reduction is requested over an empty mask."""


class NotRangeOperatorError(ShiftDiagError):
    """Raised when an action maps frame vectors outside the fiber space."""


class InvertibilityError(ShiftDiagError):
    """Raised when a field fails a uniform lower bound.

    ``cell`` is the flat index of the worst cell and ``value`` the offending
    quantity there (smallest singular value, or smallest symbol modulus).
    """

    def __init__(self, msg, cell, value):
        super().__init__(msg)
        self.cell = cell
        self.value = value


class DefectiveFiberError(ShiftDiagError):
    """Raised when a computation needs diagonalizable fibers but some are not."""

    def __init__(self, msg, mask):
        super().__init__(msg)
        self.mask = mask


class NotNormalError(ShiftDiagError):
    """Raised by orthogonal synthesis on a non-normal operator field."""


class EigenSolverError(ShiftDiagError):
    def __init__(self, msg, cell):
        super().__init__(msg)
        self.cell = cell


class SupportCapError(ShiftDiagError, ValueError):
    """Raised when a convolution result would exceed the support cap."""


class NotInSpaceError(ShiftDiagError):
    """Raised when a signal's fibers leave the range function J."""


class ProblemFormatError(ShiftDiagError, ValueError):
    pass


def worst_cell(values):
    """Index and value of the smallest entry of ``values``."""
    t = int(np.argmin(values))
    return t, float(values[t])
