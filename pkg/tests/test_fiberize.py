import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftdiag.fields import FrequencyGrid
from shiftdiag.fiberize import (
    GeneratorSet,
    LatticeWindow,
    fiber_mass,
    fiberize_signal,
    frame_from_generators,
    project_onto_fiber,
    translate_fhat,
)


def gaussian(center, width):
    return lambda xi: np.exp(-((xi[..., 0] - center) ** 2) / (2 * width**2))


def test_window_enumeration_is_lexicographic():
    win = LatticeWindow(2, 1)
    assert win.M == 9
    assert win.points[0].tolist() == [-1, -1]
    assert win.points[1].tolist() == [-1, 0]
    assert win.points[-1].tolist() == [1, 1]
    for i, k in enumerate(win.points):
        assert win.index(k) == i


def test_window_index_outside_raises():
    with pytest.raises(KeyError):
        LatticeWindow(1, 2).index(3)


def test_window_enclosing():
    assert LatticeWindow.enclosing(1, 4).K == 2
    assert LatticeWindow.enclosing(2, 9).K == 1


def test_indicator_fiber_is_unit_vector():
    grid = FrequencyGrid(1, 16)
    win = LatticeWindow(1, 2)

    def fhat(xi):
        return ((xi[..., 0] >= 0) & (xi[..., 0] < 1)).astype(float)

    fibers = fiberize_signal(fhat, grid, win)
    expected = np.zeros((16, 5))
    expected[:, win.index(0)] = 1
    np.testing.assert_array_equal(fibers.real, expected)
    assert fiber_mass(fibers) == 1.0


def test_fiberize_dimension_mismatch():
    with pytest.raises(ValueError):
        fiberize_signal(gaussian(0, 1), FrequencyGrid(1, 8), LatticeWindow(2, 1))


def test_gaussian_parseval_against_quadrature():
    grid = FrequencyGrid(1, 512)
    win = LatticeWindow(1, 8)
    fhat = gaussian(0.3, 0.4)
    fibers = fiberize_signal(fhat, grid, win)
    exact = np.sqrt(np.pi) * 0.4  # int exp(-x^2 / s^2) dx
    assert fiber_mass(fibers) == pytest.approx(exact, rel=1e-10)


@settings(max_examples=25, deadline=None)
@given(st.integers(-5, 5), st.floats(-3, 3), st.floats(0.1, 0.8))
def test_modulation_identity(k, center, width):
    grid = FrequencyGrid(1, 64)
    win = LatticeWindow(1, 6)
    fhat = gaussian(center, width)
    base = fiberize_signal(fhat, grid, win)
    shifted = fiberize_signal(translate_fhat(fhat, [k]), grid, win)
    phase = np.exp(-2j * np.pi * grid.cells[:, 0] * k)[:, None]
    np.testing.assert_allclose(shifted, phase * base, atol=1e-12)


def test_standard_generators_reproduce_themselves():
    grid = FrequencyGrid(1, 8)
    gens = GeneratorSet.standard(grid, 3)
    frame = frame_from_generators(gens)
    assert frame.length == 3
    np.testing.assert_array_equal(frame.basis.data, gens.matrix)


def test_frame_dimension_drops_where_generator_vanishes():
    grid = FrequencyGrid(1, 32)
    win = LatticeWindow(1, 1)
    half = (grid.cells[:, 0] < 0.5).astype(float)
    gens = GeneratorSet.from_components(win, grid, [{(0,): 1.0}, {(1,): half}])
    frame = frame_from_generators(gens)
    np.testing.assert_array_equal(frame.dims, np.where(half > 0, 2, 1))
    assert frame.dimension_masks[2].measure == 0.5
    assert frame.spectrum.measure == 1.0


def test_frame_of_dependent_generators():
    grid = FrequencyGrid(1, 16)
    win = LatticeWindow(1, 1)
    gens = GeneratorSet.from_components(
        win, grid, [{(0,): 1.0, (1,): {(1,): 1.0}}, {(0,): 2.0, (1,): {(1,): 2.0}}]
    )
    frame = frame_from_generators(gens)
    assert (frame.dims == 1).all()


def test_frame_from_components_rejects_bad_rank_tol():
    gens = GeneratorSet.standard(FrequencyGrid(1, 4), 1)
    with pytest.raises(ValueError):
        frame_from_generators(gens, rank_tol=0)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 4))
def test_frame_is_orthonormal_and_spans_generators(seed, ell):
    rng = np.random.default_rng(seed)
    grid = FrequencyGrid(1, 16)
    win = LatticeWindow(1, 2)
    G = rng.standard_normal((grid.size, win.M, ell)) + 1j * rng.standard_normal((grid.size, win.M, ell))
    frame = frame_from_generators(GeneratorSet(win, grid, G))
    for t in range(grid.size):
        B = frame[t]
        np.testing.assert_allclose(B.conj().T @ B, np.eye(B.shape[1]), atol=1e-12)
        np.testing.assert_allclose(B @ (B.conj().T @ G[t]), G[t], atol=1e-10)
    proj = project_onto_fiber(frame, G[:, :, 0])
    np.testing.assert_allclose(proj, G[:, :, 0], atol=1e-10)


def test_generator_shape_checked():
    grid = FrequencyGrid(1, 4)
    with pytest.raises(ValueError):
        GeneratorSet(LatticeWindow(1, 1), grid, np.zeros((4, 2, 1)))
