"""Coefficient-level action of shift-preserving operators.

A signal in V is f = sum_i sum_k b_i(k) T_k phi_i, stored as one
finite-support sequence per generator. Its fibers are Tf(omega) = G(omega)
bhat(omega), so an operator can be applied fiberwise and pulled back to
coefficients by inverse DFT over the grid. Lambda_a acts by channelwise
convolution with a.

Signals whose transforms are only known on the grid use the grid
representation: radius n/2 coefficients (the -n/2 slot left empty for even
n) that reproduce the samples exactly. Two sequences agree on the grid iff
their folds modulo n agree.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.signal

from .errors import NotInSpaceError, SupportCapError
from .fiberize import LatticeWindow

MAX_CONVOLUTION_SIZE = 10**7
DEFAULT_SPACE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class CoefficientVector:
    """Sequences b_1..b_l on the window ``|k| <= radius``; ``values`` is (l, M)."""

    d: int
    radius: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=complex)
        if v.ndim == 1:
            v = v[None, :]
        if v.ndim != 2 or v.shape[1] != self.window.M:
            raise ValueError(f"coefficients must have shape (l, {self.window.M})")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @cached_property
    def window(self):
        return LatticeWindow(self.d, self.radius)

    @property
    def count(self):
        return self.values.shape[0]

    def norm(self):
        return float(np.linalg.norm(self.values))

    def grid_array(self):
        """Values reshaped to ``(l, 2r+1, ..., 2r+1)``."""
        return self.values.reshape((self.count,) + (2 * self.radius + 1,) * self.d)

    def evaluate(self, grid):
        """bhat_i(omega) at every cell, shape ``(cells, l)``."""
        if grid.d != self.d:
            raise ValueError("grid dimension does not match coefficients")
        return grid.characters(self.window.points) @ self.values.T

    def embed(self, radius):
        """The same sequences on a larger window."""
        if radius < self.radius:
            raise ValueError("cannot embed into a smaller window")
        pad = radius - self.radius
        arr = np.pad(self.grid_array(), [(0, 0)] + [(pad, pad)] * self.d)
        return CoefficientVector(self.d, radius, arr.reshape(self.count, -1))

    def shift(self, k):
        """Coefficients of T_k f: b_i(m) -> b_i(m - k)."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        r = self.radius + int(np.abs(k).max(initial=0))
        arr = self.embed(r).grid_array()
        arr = np.roll(arr, tuple(k), axis=tuple(range(1, self.d + 1)))
        return CoefficientVector(self.d, r, arr.reshape(self.count, -1))

    def __add__(self, other):
        r = max(self.radius, other.radius)
        return CoefficientVector(self.d, r, self.embed(r).values + other.embed(r).values)

    def __sub__(self, other):
        return self + CoefficientVector(other.d, other.radius, -other.values)

    def scale(self, c):
        return CoefficientVector(self.d, self.radius, c * self.values)

    @classmethod
    def random(cls, rng, d, radius, count):
        M = (2 * radius + 1) ** d
        v = rng.standard_normal((count, M)) + 1j * rng.standard_normal((count, M))
        return cls(d, radius, v)

    @classmethod
    def from_terms(cls, d, count, terms):
        """From ``{(i, k): value}`` with generator index i and lattice point k."""
        radius = max([0, *(int(np.abs(np.atleast_1d(k)).max()) for _, k in terms)])
        win = LatticeWindow(d, radius)
        v = np.zeros((count, win.M), dtype=complex)
        for (i, k), val in terms.items():
            v[i, win.index(k)] += val
        return cls(d, radius, v)


def grid_radius(grid):
    return grid.n // 2


def from_grid_samples(samples, grid, radius=None):
    """Coefficients whose transform matches per-cell samples (inverse DFT).

    ``samples`` has shape ``(cells, l)``. The default radius is the grid
    representation, which reproduces the samples exactly; a smaller radius
    truncates and is exact when the samples come from a trig polynomial of
    that degree.
    """
    samples = np.asarray(samples, dtype=complex)
    if samples.ndim == 1:
        samples = samples[:, None]
    top = grid_radius(grid)
    radius = top if radius is None else radius
    if radius > top:
        raise ValueError(f"radius {radius} exceeds grid resolution {top}")
    win = LatticeWindow(grid.d, radius)
    E = grid.characters(win.points)
    values = (E.conj().T @ samples / grid.size).T
    if grid.n % 2 == 0 and radius == top:
        values[:, (win.points == -top).any(axis=1)] = 0
    return CoefficientVector(grid.d, radius, values)


def fold(coeffs, grid):
    """Reduce coefficients modulo n into the grid representation.

    Two coefficient vectors have the same transform at every cell iff their
    folds agree; this is how finite convolutions are compared with
    grid-sampled fiber computations.
    """
    n = grid.n
    top = grid_radius(grid)
    win = LatticeWindow(grid.d, top)
    pts = coeffs.window.points
    red = np.mod(pts + top, n) - top
    if n % 2 == 0:
        red = np.where(red == -top, top, red)
    # a lattice point k contributes exp(-2 pi i <omega, k>) at cell centers;
    # reducing k by a multiple n*q multiplies that by exp(-pi i * sum q)
    q = (pts - red) // n
    phase = np.where(np.sum(q, axis=1) % 2 == 0, 1.0, -1.0)
    idx = np.ravel_multi_index((red + top).T, (2 * top + 1,) * grid.d)
    out = np.zeros((coeffs.count, win.M), dtype=complex)
    for i in range(coeffs.count):
        np.add.at(out[i], idx, coeffs.values[i] * phase)
    return CoefficientVector(grid.d, top, out)


def convolve_sequences(a, b, d):
    """Exact discrete convolution of two coefficient arrays on centered windows.

    ``a`` and ``b`` are flat arrays on windows of radii ``ra`` and ``rb``;
    the result lives on radius ``ra + rb``.
    """
    ra = _radius_of(a.size, d)
    rb = _radius_of(b.size, d)
    size = (2 * (ra + rb) + 1) ** d
    if size > MAX_CONVOLUTION_SIZE:
        raise SupportCapError(f"convolution support of {size} points exceeds cap {MAX_CONVOLUTION_SIZE}")
    A = np.asarray(a, dtype=complex).reshape((2 * ra + 1,) * d)
    B = np.asarray(b, dtype=complex).reshape((2 * rb + 1,) * d)
    return scipy.signal.convolve(A, B, method="direct").reshape(-1), ra + rb


def _radius_of(size, d):
    side = round(size ** (1.0 / d))
    for s in (side - 1, side, side + 1):
        if s > 0 and s**d == size and s % 2 == 1:
            return (s - 1) // 2
    raise ValueError(f"{size} is not the size of a centered window in dimension {d}")


def convolve(a, b):
    """a * b for a SymbolSequence a and a CoefficientVector b (channelwise)."""
    if a.d != b.d:
        raise ValueError("dimension mismatch")
    rows = []
    for row in b.values:
        out, r = convolve_sequences(a.coeffs, row, a.d)
        rows.append(out)
    return CoefficientVector(b.d, a.radius + b.radius, np.array(rows))


def apply_lambda(a, coeffs):
    """Coefficients of Lambda_a f: channelwise convolution a * b_i."""
    return convolve(a, coeffs)


def fiber_norm(coeffs, gens):
    """Quadrature of ``||f||`` from its fibers ``G(omega) bhat(omega)``."""
    Tf = signal_fibers(coeffs, gens)
    return float(np.sqrt(np.mean(np.sum(np.abs(Tf) ** 2, axis=1))))


def signal_fibers(coeffs, gens):
    """Tf(omega) = G(omega) bhat(omega) at every cell, shape ``(cells, M)``."""
    if coeffs.count != gens.count:
        raise ValueError(f"{coeffs.count} coefficient channels for {gens.count} generators")
    bhat = coeffs.evaluate(gens.grid)
    return np.einsum("tmi,ti->tm", gens.matrix, bhat)


def _check_riesz(gens, tol):
    s = np.linalg.svd(gens.matrix, compute_uv=False)
    if (s[:, -1] <= tol * np.maximum(s[:, 0], 1e-300)).any():
        raise ValueError(
            "generator fibers must have full column rank on every cell "
            "for coefficients to be unique"
        )


def pull_back(fibers, gens, radius=None, tol=DEFAULT_SPACE_TOL):
    """Coefficients c with G(omega) chat(omega) = fibers, via least squares and inverse DFT."""
    _check_riesz(gens, tol)
    chat = _solve(gens.matrix, fibers)
    return from_grid_samples(chat, gens.grid, radius)


def _solve(G, y):
    Gp = np.linalg.pinv(G)
    return np.einsum("tim,tm->ti", Gp, y)


def apply_operator(R, coeffs, out_radius=None, tol=DEFAULT_SPACE_TOL):
    """Coefficients of Lf: apply [R](omega) to Tf(omega) in the frame and pull back.

    The output is in the grid representation unless ``out_radius`` is given.
    Raises :class:`NotInSpaceError` when some fiber of f leaves J(omega).
    """
    frame = R.frame
    gens = frame.generators
    Tf = signal_fibers(coeffs, gens)
    B = frame.basis.data
    inside = np.einsum("tmj,tm->tj", B.conj(), Tf)
    outside = Tf - np.einsum("tmj,tj->tm", B, inside)
    scale = np.maximum(np.linalg.norm(Tf, axis=1), 1.0)
    gap = np.linalg.norm(outside, axis=1)
    if (gap > tol * scale).any():
        t = int(np.argmax(gap / scale))
        raise NotInSpaceError(f"f not in V: fiber distance {gap[t]:.3g} at cell {t}")
    mapped = np.einsum("tij,tj->ti", R.matrices.data, inside)
    out = np.einsum("tmj,tj->tm", B, mapped)
    return pull_back(out, gens, out_radius, tol)


def synthesize_in_eigenspace(dec, R, j, rng):
    """Random f in the s-eigenspace of pair j, in the grid representation.

    Draws a random vector in the eigenspace of every cell and pulls the
    resulting fibers back to coefficients.
    """
    pair = dec.pairs[j - 1]
    E = pair.eigenspace.basis.data
    width = E.shape[2]
    z = rng.standard_normal((R.grid.size, width)) + 1j * rng.standard_normal((R.grid.size, width))
    z *= np.arange(width)[None, :] < pair.eigenspace.nullity[:, None]
    v = np.einsum("tij,tj->ti", E, z)
    fibers = np.einsum("tmj,tj->tm", R.frame.basis.data, v)
    return pull_back(fibers, R.frame.generators)


def decompose_signal(dec, R, coeffs):
    """Components Q_j f of f along the decomposition, computed per cell."""
    from .sdiag import oblique_projectors

    frame = R.frame
    Tf = signal_fibers(coeffs, frame.generators)
    B = frame.basis.data
    inside = np.einsum("tmj,tm->tj", B.conj(), Tf)
    parts = np.zeros((dec.m,) + Tf.shape, dtype=complex)
    for t in np.flatnonzero(R.dims > 0):
        n = R.dims[t]
        Q, _ = oblique_projectors(dec, t)
        for j, q in enumerate(Q):
            parts[j, t] = B[t, :, :n] @ (q @ inside[t, :n])
    return [pull_back(p, frame.generators) for p in parts]
