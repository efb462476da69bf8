"""Fiberwise analysis and s-diagonalization of shift-preserving operators."""

__version__ = "0.1.0"

from .errors import (
    DefectiveFiberError,
    EigenSolverError,
    InvertibilityError,
    NotInSpaceError,
    NotNormalError,
    NotRangeOperatorError,
    NullSetError,
    ProblemFormatError,
    ShiftDiagError,
    SupportCapError,
)
from .fields import FrequencyGrid, MatrixField, MeasurableMask, ess_sup, mask_measure, trig_poly
from .fiberize import (
    FiberFrame,
    GeneratorSet,
    LatticeWindow,
    fiberize_signal,
    frame_from_generators,
)
from .rangeop import RangeOperatorField, invert, is_normal, is_self_adjoint, kernel_field, matrix_rep, op_norm
from .eigen import fiber_spectra, paste_eigenvalues
from .sdiag import (
    SDiagonalization,
    SymbolSequence,
    angle_cb,
    cb_field,
    check_decomposition,
    decide_s_diagonalizable,
    invert_decomposition,
    oblique_synthesis,
    spectral_synthesis,
    split_spectrum,
    symbol_from_field,
)
from .signal import CoefficientVector, apply_lambda, apply_operator, convolve
