"""Fiberization and range-function frames.

A function f in L^2(R^d) is represented fiberwise by

    T f(omega) = { fhat(omega + k) }_k ,   omega in [0,1)^d,

truncated to the lattice window ``|k|_inf <= K``. A finitely generated
shift-invariant space is described by generator fibers; its range function
J(omega) is their per-cell span, for which :func:`frame_from_generators`
builds an orthonormal basis.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .fields import FrequencyGrid, MatrixField, MeasurableMask, trig_poly


@dataclass(frozen=True)
class LatticeWindow:
    """Lattice points ``k`` in Z^d with ``max|k_i| <= K``, lexicographic order."""

    d: int
    K: int

    def __post_init__(self):
        if self.K < 0:
            raise ValueError("window radius must be >= 0")

    @property
    def M(self):
        return (2 * self.K + 1) ** self.d

    @cached_property
    def points(self):
        rng = range(-self.K, self.K + 1)
        return np.array(list(itertools.product(rng, repeat=self.d)), dtype=int)

    def index(self, k):
        """Position of lattice point ``k`` in the enumeration."""
        k = np.atleast_1d(np.asarray(k, dtype=int))
        if k.shape != (self.d,) or np.abs(k).max(initial=0) > self.K:
            raise KeyError(f"lattice point {tuple(k)} outside window K={self.K}")
        pos = 0
        for ki in k:
            pos = pos * (2 * self.K + 1) + int(ki) + self.K
        return pos

    @classmethod
    def enclosing(cls, d, count):
        """Smallest window holding at least ``count`` lattice points."""
        K = 0
        while (2 * K + 1) ** d < count:
            K += 1
        return cls(d, K)


def fiberize_signal(fhat, grid, window):
    """Fibers of f sampled on the grid: ``out[t, m] = fhat(omega_t + k_m)``.

    ``fhat`` is a vectorized callable taking an array of shape ``(..., d)``
    of frequencies and returning complex values of shape ``(...)``.
    """
    if grid.d != window.d:
        raise ValueError(
            f"window dimension {window.d} does not match grid dimension {grid.d}"
        )
    xi = grid.cells[:, None, :] + window.points[None, :, :]
    out = np.asarray(fhat(xi), dtype=complex)
    if out.shape != xi.shape[:2]:
        raise ValueError(f"fhat returned shape {out.shape}, expected {xi.shape[:2]}")
    return out


def translate_fhat(fhat, k):
    """Fourier transform of the integer translate ``T_k f = f(. - k)``."""
    k = np.asarray(k, dtype=float)

    def shifted(xi):
        return np.exp(-2j * np.pi * (xi @ k)) * fhat(xi)

    return shifted


def fiber_mass(fibers):
    """Quadrature of ``int ||T f(omega)||^2 d omega``: mean over cells."""
    return float(np.mean(np.sum(np.abs(fibers) ** 2, axis=-1)))


@dataclass(frozen=True, eq=False)
class GeneratorSet:
    """Fibers of generators phi_1..phi_l; ``matrix[t]`` is the M x l matrix G(omega_t)."""

    window: LatticeWindow
    grid: FrequencyGrid
    matrix: np.ndarray

    def __post_init__(self):
        G = np.asarray(self.matrix, dtype=complex)
        if G.ndim == 2:
            G = G[:, :, None]
        if G.shape[:2] != (self.grid.size, self.window.M):
            raise ValueError(
                f"generator fibers have shape {G.shape[:2]}, expected "
                f"({self.grid.size}, {self.window.M})"
            )
        if self.window.d != self.grid.d:
            raise ValueError("window and grid dimensions differ")
        G.setflags(write=False)
        object.__setattr__(self, "matrix", G)

    @property
    def count(self):
        return self.matrix.shape[2]

    @classmethod
    def from_components(cls, window, grid, components):
        """Build from per-generator fiber components.

        ``components[i]`` maps a lattice point ``k`` to either a trig
        polynomial (dict frequency -> coefficient) or an array of per-cell
        values; missing lattice points are zero.
        """
        G = np.zeros((grid.size, window.M, len(components)), dtype=complex)
        for i, comp in enumerate(components):
            for k, spec in comp.items():
                m = window.index(k)
                if isinstance(spec, dict):
                    G[:, m, i] = trig_poly(grid, spec)
                else:
                    G[:, m, i] = np.broadcast_to(np.asarray(spec, dtype=complex), grid.size)
        return cls(window, grid, G)

    @classmethod
    def standard(cls, grid, count, window=None):
        """Orthonormal generators whose fibers are unit vectors e_k (first ``count`` window points).

        These correspond to phi_i with fhat_i the indicator of the unit cube
        shifted by k, so E(Phi) is an orthonormal basis and the frame matrix
        of a range operator equals its matrix in generator coordinates.
        """
        window = window or LatticeWindow.enclosing(grid.d, count)
        if window.M < count:
            raise ValueError("window too small for requested generator count")
        G = np.zeros((grid.size, window.M, count), dtype=complex)
        G[:, np.arange(count), np.arange(count)] = 1.0
        return cls(window, grid, G)


@dataclass(frozen=True, eq=False)
class FiberFrame:
    """Per-cell orthonormal basis of J(omega) with its dimension partition."""

    grid: FrequencyGrid
    window: LatticeWindow
    basis: MatrixField
    generators: GeneratorSet
    rank_tol: float

    @property
    def dims(self):
        return self.basis.cols

    @property
    def max_dim(self):
        return self.basis.data.shape[2]

    @property
    def length(self):
        """L(V): the largest fiber dimension."""
        return int(self.dims.max(initial=0))

    @cached_property
    def dimension_masks(self):
        """Masks A_n = {dim J = n} for n = 0..generator count."""
        return {
            n: MeasurableMask(self.grid, self.dims == n)
            for n in range(self.generators.count + 1)
        }

    @property
    def spectrum(self):
        """sigma(V) = {J(omega) != 0}."""
        return MeasurableMask(self.grid, self.dims > 0)

    def __getitem__(self, t):
        return self.basis[t]


def _numerical_rank(svals, rank_tol):
    top = svals[..., :1]
    return np.sum(svals > rank_tol * top, axis=-1) * (top[..., 0] > 0)


def frame_from_generators(gens, rank_tol=1e-8):
    """Orthonormal frames of J(omega) = span{T phi_i(omega)}.

    The fiber dimension is the numerical rank of G(omega) (singular values
    at least ``rank_tol * sigma_1``). The basis is built by Gram-Schmidt over
    the generator columns in order, skipping columns already spanned, so
    that cells where the generators are orthonormal reproduce them exactly.
    Cells where the greedy pass disagrees with the SVD rank (borderline
    tolerance cases) fall back to the leading left singular vectors.
    """
    if not rank_tol > 0:
        raise ValueError("rank_tol must be positive")
    G = gens.matrix
    N, M, ell = G.shape
    U, s, _ = np.linalg.svd(G, full_matrices=False)
    rank = _numerical_rank(s, rank_tol)
    sigma1 = s[:, 0] if ell else np.zeros(N)

    Q = np.zeros((N, M, ell), dtype=complex)
    count = np.zeros(N, dtype=int)
    cells = np.arange(N)
    for i in range(ell):
        g = G[:, :, i]
        r = g.copy()
        for _ in range(2):
            r = r - np.einsum("tmj,tj->tm", Q, np.einsum("tmj,tm->tj", Q.conj(), r))
        norm = np.linalg.norm(r, axis=1)
        take = (norm > rank_tol * sigma1) & (count < rank)
        slots = count[take]
        Q[cells[take], :, slots] = r[take] / norm[take, None]
        count += take

    bad = np.flatnonzero(count != rank)
    for t in bad:
        Q[t] = 0
        Q[t, :, : rank[t]] = U[t, :, : rank[t]]
    width = int(rank.max(initial=0))
    basis = MatrixField(gens.grid, Q[:, :, :width], np.full(N, M), rank)
    return FiberFrame(gens.grid, gens.window, basis, gens, rank_tol)


def project_onto_fiber(frame, v):
    """Per-cell orthogonal projection ``B B^* v`` of a fiber-vector field onto J(omega)."""
    v = np.asarray(v, dtype=complex)
    B = frame.basis.data
    if v.shape != B.shape[:2]:
        raise ValueError(f"vector field has shape {v.shape}, expected {B.shape[:2]}")
    coeff = np.einsum("tmj,tm->tj", B.conj(), v)
    return np.einsum("tmj,tj->tm", B, coeff)
