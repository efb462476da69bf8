import numpy as np
from scipy.stats import unitary_group

from shiftdiag.fields import FrequencyGrid, trig_poly
from shiftdiag.fiberize import GeneratorSet, LatticeWindow, frame_from_generators
from shiftdiag.rangeop import RangeOperatorField, generator_matrix_action, matrix_rep


def standard_frame(n=64, ell=2, d=1):
    grid = FrequencyGrid(d, n)
    return frame_from_generators(GeneratorSet.standard(grid, ell))


def omega(frame):
    return frame.grid.cells[:, 0]


def field(frame, fn):
    """Range operator whose matrix at cell omega is ``fn(omega)``."""
    mats = np.array([np.asarray(fn(w), dtype=complex) for w in omega(frame)])
    return RangeOperatorField.from_matrices(frame, mats)


def random_poly(rng, grid, degree, scale=1.0):
    terms = {
        (k,): scale * (rng.standard_normal() + 1j * rng.standard_normal())
        for k in range(-degree, degree + 1)
    }
    return trig_poly(grid, terms)


def random_trig_matrices(rng, grid, size, degree, scale=1.0):
    out = np.zeros((grid.size, size, size), dtype=complex)
    for i in range(size):
        for j in range(size):
            out[:, i, j] = random_poly(rng, grid, degree, scale)
    return out


def random_hermitian_field(rng, frame, size=3, degree=2):
    grid = frame.grid
    w = omega(frame)
    A0 = rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))
    mats = np.broadcast_to((A0 + A0.conj().T) / 2, (grid.size, size, size)).copy()
    for k in range(1, degree + 1):
        Ak = (rng.standard_normal((size, size)) + 1j * rng.standard_normal((size, size))) / (k + 1)
        e = np.exp(-2j * np.pi * k * w)[:, None, None]
        mats += Ak * e + Ak.conj().T * e.conj()
    return RangeOperatorField.from_matrices(frame, mats)


def random_normal_field(rng, frame, size=3, degree=2):
    grid = frame.grid
    U = unitary_group.rvs(size, random_state=rng)
    D = np.zeros((grid.size, size, size), dtype=complex)
    for i in range(size):
        D[:, i, i] = random_poly(rng, grid, degree, 0.5) + 3 * i
    return RangeOperatorField.from_matrices(frame, U @ D @ U.conj().T)


def riesz_frame(rng, n, ell, K=2):
    """Constant non-orthogonal generator fibers with full column rank."""
    grid = FrequencyGrid(1, n)
    window = LatticeWindow(1, K)
    A = rng.standard_normal((window.M, ell)) + 1j * rng.standard_normal((window.M, ell))
    gens = GeneratorSet(window, grid, np.broadcast_to(A, (grid.size, window.M, ell)).copy())
    return frame_from_generators(gens)


def generator_field(frame, mats):
    """Operator with per-cell matrices ``mats`` in generator coordinates."""
    return matrix_rep(generator_matrix_action(frame.generators, mats), frame)
