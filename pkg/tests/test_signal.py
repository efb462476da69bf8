import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import field, riesz_frame, generator_field, standard_frame
from shiftdiag import signal as sig
from shiftdiag.errors import NotInSpaceError, SupportCapError
from shiftdiag.fields import FrequencyGrid
from shiftdiag.fiberize import GeneratorSet, LatticeWindow, frame_from_generators
from shiftdiag.rangeop import RangeOperatorField
from shiftdiag.sdiag import SymbolSequence, decide_s_diagonalizable
from shiftdiag.signal import (
    CoefficientVector,
    apply_lambda,
    apply_operator,
    convolve,
    decompose_signal,
    fiber_norm,
    fold,
    from_grid_samples,
    synthesize_in_eigenspace,
)


def double_sum(a, b):
    """Reference 1-d convolution on centered windows."""
    ra, rb = (len(a) - 1) // 2, (len(b) - 1) // 2
    out = np.zeros(len(a) + len(b) - 1, dtype=complex)
    for i, ka in enumerate(range(-ra, ra + 1)):
        for j, kb in enumerate(range(-rb, rb + 1)):
            out[ka + kb + ra + rb] += a[i] * b[j]
    return out


def test_convolve_with_delta_zero():
    rng = np.random.default_rng(0)
    b = CoefficientVector.random(rng, 1, 3, 2)
    out = convolve(SymbolSequence.delta(0), b)
    np.testing.assert_array_equal(out.values, b.values)


def test_convolve_deltas():
    out = convolve(SymbolSequence.delta(1), CoefficientVector.from_terms(1, 1, {(0, (0,)): 1.0}))
    expected = CoefficientVector.from_terms(1, 1, {(0, (1,)): 1.0})
    np.testing.assert_array_equal(out.values, expected.values)


@pytest.mark.parametrize("seed", range(5))
def test_convolve_matches_double_sum(seed):
    rng = np.random.default_rng(seed)
    a = SymbolSequence(1, 4, rng.standard_normal(9) + 1j * rng.standard_normal(9))
    b = CoefficientVector.random(rng, 1, 4, 1)
    out = convolve(a, b)
    np.testing.assert_allclose(out.values[0], double_sum(a.coeffs, b.values[0]), rtol=0, atol=1e-14)


def test_convolution_transform_is_product():
    rng = np.random.default_rng(1)
    grid = FrequencyGrid(1, 64)
    a = SymbolSequence(1, 3, rng.standard_normal(7))
    b = CoefficientVector.random(rng, 1, 5, 2)
    out = convolve(a, b)
    np.testing.assert_allclose(out.evaluate(grid), a.evaluate(grid)[:, None] * b.evaluate(grid), atol=1e-12)


def test_convolve_two_dimensional():
    a = SymbolSequence.from_terms(2, {(1, 0): 2.0})
    b = CoefficientVector.from_terms(2, 1, {(0, (0, -1)): 1.0})
    out = convolve(a, b)
    expected = CoefficientVector.from_terms(2, 1, {(0, (1, -1)): 2.0}).embed(out.radius)
    np.testing.assert_array_equal(out.values, expected.values)


def test_support_cap(monkeypatch):
    monkeypatch.setattr(sig, "MAX_CONVOLUTION_SIZE", 20)
    with pytest.raises(SupportCapError):
        convolve(SymbolSequence(1, 5, np.ones(11)), CoefficientVector(1, 5, np.ones(11)))


def test_scalar_symbol_scales():
    rng = np.random.default_rng(2)
    b = CoefficientVector.random(rng, 1, 3, 2)
    out = apply_lambda(SymbolSequence.constant(2 - 1j), b)
    np.testing.assert_allclose(out.values, (2 - 1j) * b.values)


def test_grid_samples_round_trip():
    rng = np.random.default_rng(3)
    grid = FrequencyGrid(1, 32)
    samples = rng.standard_normal((32, 2)) + 1j * rng.standard_normal((32, 2))
    c = from_grid_samples(samples, grid)
    np.testing.assert_allclose(c.evaluate(grid), samples, atol=1e-12)
    odd = FrequencyGrid(1, 31)
    s2 = rng.standard_normal((31, 1))
    np.testing.assert_allclose(from_grid_samples(s2, odd).evaluate(odd), s2, atol=1e-12)


def test_fold_preserves_transform_on_grid():
    rng = np.random.default_rng(4)
    grid = FrequencyGrid(1, 16)
    b = CoefficientVector.random(rng, 1, 20, 2)
    np.testing.assert_allclose(fold(b, grid).evaluate(grid), b.evaluate(grid), atol=1e-11)


def test_apply_operator_identity():
    rng = np.random.default_rng(5)
    R = field(standard_frame(64, 2), lambda w: np.eye(2))
    b = CoefficientVector.random(rng, 1, 4, 2)
    np.testing.assert_allclose(apply_operator(R, b, out_radius=4).values, b.values, atol=1e-10)


def test_apply_operator_scalar_symbol_matches_convolution():
    rng = np.random.default_rng(6)
    frame = standard_frame(64, 2)
    a = SymbolSequence(1, 2, rng.standard_normal(5) + 1j * rng.standard_normal(5))
    ahat = a.evaluate(frame.grid)
    R = RangeOperatorField.from_matrices(frame, ahat[:, None, None] * np.eye(2))
    b = CoefficientVector.random(rng, 1, 4, 2)
    expected = apply_lambda(a, b)
    got = apply_operator(R, b, out_radius=expected.radius)
    np.testing.assert_allclose(got.values, expected.values, atol=1e-10)


def test_fiber_route_for_lambda_on_riesz_generators():
    rng = np.random.default_rng(7)
    frame = riesz_frame(rng, 64, 2)
    a = SymbolSequence.from_terms(1, {(0,): 1.0, (1,): 0.5j})
    ahat = a.evaluate(frame.grid)
    R = generator_field(frame, ahat[:, None, None] * np.eye(2))
    b = CoefficientVector.random(rng, 1, 3, 2)
    got = apply_operator(R, b, out_radius=4)
    np.testing.assert_allclose(got.values, apply_lambda(a, b).values, atol=1e-10)


def test_apply_operator_rejects_signal_outside_space():
    grid = FrequencyGrid(1, 16)
    win = LatticeWindow(1, 1)
    # the second generator is below the rank cutoff on half the cells, so
    # J(omega) drops it there while a huge coefficient still excites it
    tiny = np.where(grid.cells[:, 0] < 0.5, 1.0, 1e-12)
    gens = GeneratorSet.from_components(win, grid, [{(0,): 1.0}, {(1,): tiny}])
    frame = frame_from_generators(gens)
    assert frame.dims.min() == 1
    R = RangeOperatorField.from_matrices(frame, np.broadcast_to(np.eye(2), (16, 2, 2)))
    b = CoefficientVector.from_terms(1, 2, {(1, (0,)): 1e12})
    with pytest.raises(NotInSpaceError, match="f not in V"):
        apply_operator(R, b)


def test_eigen_action_on_skewed_field():
    rng = np.random.default_rng(8)
    R = field(standard_frame(64, 2), lambda w: [[np.exp(-2j * np.pi * w), 1], [0, 3]])
    dec = decide_s_diagonalizable(R).decomposition
    for j, pair in enumerate(dec.pairs, start=1):
        f = synthesize_in_eigenspace(dec, R, j, rng)
        lhs = apply_operator(R, f)
        rhs = fold(apply_lambda(pair.symbol, f), R.grid)
        assert np.linalg.norm(lhs.values - rhs.values) <= 1e-8 * f.norm()


def test_decomposition_linearity():
    rng = np.random.default_rng(9)
    R = field(standard_frame(64, 2), lambda w: [[np.exp(-2j * np.pi * w), 1], [0, 3]])
    dec = decide_s_diagonalizable(R).decomposition
    b = CoefficientVector.random(rng, 1, 4, 2)
    parts = decompose_signal(dec, R, b)
    total = apply_lambda(dec.pairs[0].symbol, parts[0])
    for p, q in zip(dec.pairs[1:], parts[1:]):
        total = total + apply_lambda(p.symbol, q)
    np.testing.assert_allclose(apply_operator(R, b).values, fold(total, R.grid).values, atol=1e-7)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(-4, 4))
def test_intertwining(seed, k):
    rng = np.random.default_rng(seed)
    R = field(standard_frame(32, 2), lambda w: [[1 + w, np.exp(2j * np.pi * w)], [0.5, 2]])
    b = CoefficientVector.random(rng, 1, 3, 2)
    lhs = apply_operator(R, b.shift(k))
    rhs = fold(apply_operator(R, b).shift(k), R.grid)
    np.testing.assert_allclose(lhs.values, rhs.values, atol=1e-10)


def test_shift_commutes_with_convolution():
    rng = np.random.default_rng(10)
    a = SymbolSequence(1, 2, rng.standard_normal(5))
    b = CoefficientVector.random(rng, 1, 3, 1)
    lhs = apply_lambda(a, b.shift(2))
    rhs = apply_lambda(a, b).shift(2)
    r = max(lhs.radius, rhs.radius)
    np.testing.assert_array_equal(lhs.embed(r).values, rhs.embed(r).values)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(0, 10))
def test_parseval_consistency(seed, radius):
    rng = np.random.default_rng(seed)
    frame = standard_frame(32, 3)
    b = CoefficientVector.random(rng, 1, radius, 3)
    assert fiber_norm(b, frame.generators) == pytest.approx(b.norm(), rel=1e-8)


def test_channel_count_checked():
    frame = standard_frame(8, 2)
    with pytest.raises(ValueError):
        fiber_norm(CoefficientVector(1, 1, np.ones((3, 3))), frame.generators)
