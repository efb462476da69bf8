"""Range operators as per-cell matrices in a fiber frame.

A shift-preserving operator L on V acts fiberwise, T(Lf)(omega) =
R(omega) Tf(omega). Given an orthonormal frame B(omega) of J(omega), the
operator is stored as the n(omega) x n(omega) matrix [R](omega) = B^* R B.
"""

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg

from .errors import InvertibilityError, NotRangeOperatorError, worst_cell
from .fields import MatrixField, MeasurableMask, ess_sup, pad_stack

EXACT_PIVOT_MAX_DIM = 4


@dataclass(frozen=True, eq=False)
class RangeOperatorField:
    frame: object
    matrices: MatrixField

    def __post_init__(self):
        dims = self.frame.dims
        if not (np.array_equal(self.matrices.rows, dims)
                and np.array_equal(self.matrices.cols, dims)):
            raise ValueError("matrix dimensions must equal frame dimensions per cell")

    @property
    def grid(self):
        return self.frame.grid

    @property
    def dims(self):
        return self.frame.dims

    def __getitem__(self, t):
        return self.matrices[t]

    @cached_property
    def cell_norms(self):
        """Spectral norm of [R](omega) per cell."""
        out = np.zeros(self.grid.size)
        for n, _, cells, stack in self.matrices.blocks():
            if n:
                out[cells] = np.linalg.norm(stack, ord=2, axis=(1, 2))
        return out

    @property
    def bound(self):
        """K_R = ess sup ||[R](omega)||."""
        return op_norm(self)

    @classmethod
    def from_matrices(cls, frame, mats):
        """Wrap per-cell matrices; the leading n(omega) x n(omega) block is kept.

        ``mats`` is an array of shape ``(cells, a, a)`` with ``a`` at least the
        largest fiber dimension, or a sequence of per-cell arrays.
        """
        dims = frame.dims
        if not (isinstance(mats, np.ndarray) and mats.ndim == 3):
            mats, _, _ = pad_stack(list(mats))
        width = frame.max_dim
        a = min(width, mats.shape[1], mats.shape[2])
        data = np.zeros((frame.grid.size, width, width), dtype=complex)
        data[:, :a, :a] = mats[:, :a, :a]
        keep = np.arange(width)[None, :] < dims[:, None]
        data *= keep[:, :, None] & keep[:, None, :]
        return cls(frame, MatrixField(frame.grid, data, dims, dims))

    def map(self, fn):
        """Apply a batched function ``(k, n, n) -> (k, n, n)`` to every dimension block."""
        data = np.zeros_like(self.matrices.data)
        for n, _, cells, stack in self.matrices.blocks():
            if n:
                data[cells, :n, :n] = fn(stack)
        return RangeOperatorField(self.frame, MatrixField(self.grid, data, self.dims, self.dims))

    def shift(self, values):
        """The field R(omega) - values(omega) I."""
        values = np.broadcast_to(np.asarray(values, dtype=complex), (self.grid.size,))
        data = self.matrices.data.copy()
        for i in range(data.shape[1]):
            data[:, i, i] -= np.where(i < self.dims, values, 0)
        return RangeOperatorField(self.frame, MatrixField(self.grid, data, self.dims, self.dims))

    def __matmul__(self, other):
        if other.frame is not self.frame:
            raise ValueError("fields must share a frame")
        data = np.einsum("tij,tjk->tik", self.matrices.data, other.matrices.data)
        return RangeOperatorField(self.frame, MatrixField(self.grid, data, self.dims, self.dims))


# -- actions ---------------------------------------------------------------
#
# An action is a callable ``action(cells, V)`` mapping a stack of fiber
# vectors V with shape (k, M, c), sitting at the given cells, to R(omega) V.


def multiplication_action(values):
    """Action of Lambda_a: multiply every fiber by ``ahat(omega)``."""
    values = np.asarray(values, dtype=complex)

    def action(cells, V):
        return values[cells, None, None] * V

    return action


def frame_operator_action(gens):
    """Frame operator of {T phi_i(omega)}: v -> sum_i <v, T phi_i> T phi_i."""
    G = gens.matrix

    def action(cells, V):
        g = G[cells]
        return g @ (g.conj().transpose(0, 2, 1) @ V)

    return action


def generator_matrix_action(gens, mats):
    """Operator given by per-cell matrices in generator coordinates.

    ``mats[t]`` (l x l) says R T phi_j = sum_i mats[t, i, j] T phi_i; the
    action on J(omega) is ``G mats G^+``.
    """
    G = gens.matrix
    mats = np.asarray(mats, dtype=complex)
    if mats.shape != (G.shape[0], G.shape[2], G.shape[2]):
        raise ValueError("operator matrices must be (cells, l, l)")
    Gp = np.linalg.pinv(G)

    def action(cells, V):
        return G[cells] @ (mats[cells] @ (Gp[cells] @ V))

    return action


def matrix_rep(action, frame, tol=1e-8):
    """Matrix [R](omega)_{ij} = <R b_j, b_i> of an action in the frame B(omega).

    Raises :class:`NotRangeOperatorError` when the image of a frame column
    leaves J(omega) by more than ``tol`` (relative to the image norm, or
    absolute below unit norm).
    """
    B = frame.basis
    data = np.zeros((frame.grid.size, frame.max_dim, frame.max_dim), dtype=complex)
    for _, n, cells, stack in B.blocks():
        if n == 0:
            continue
        out = np.asarray(action(cells, stack), dtype=complex)
        coeff = stack.conj().transpose(0, 2, 1) @ out
        leak = np.linalg.norm(out - stack @ coeff, axis=1)
        scale = np.maximum(1.0, np.linalg.norm(out, axis=1))
        bad = leak > tol * scale
        if bad.any():
            t = cells[np.argwhere(bad)[0, 0]]
            raise NotRangeOperatorError(
                f"not a range operator on J: image leaves J(omega) at cell {t} "
                f"by {leak[bad].max():.3g}"
            )
        data[cells, :n, :n] = coeff
    return RangeOperatorField(frame, MatrixField(frame.grid, data, frame.dims, frame.dims))


def op_norm(R):
    """||L|| = ess sup of the per-cell spectral norm."""
    return ess_sup(R.cell_norms)


def adjoint(R):
    return R.map(lambda m: m.conj().transpose(0, 2, 1))


def _defect_ok(R, defect, tol):
    scale = op_norm(R) or 1.0
    return bool((defect <= tol * scale).all())


def self_adjoint_defect(R):
    out = np.zeros(R.grid.size)
    for n, _, cells, stack in R.matrices.blocks():
        if n:
            out[cells] = np.linalg.norm(stack - stack.conj().transpose(0, 2, 1), ord=2, axis=(1, 2))
    return out


def normal_defect(R):
    """Spectral norm of the commutator [R, R^*] per cell."""
    out = np.zeros(R.grid.size)
    for n, _, cells, stack in R.matrices.blocks():
        if n:
            h = stack.conj().transpose(0, 2, 1)
            out[cells] = np.linalg.norm(stack @ h - h @ stack, ord=2, axis=(1, 2))
    return out


def is_self_adjoint(R, tol=1e-10):
    return _defect_ok(R, self_adjoint_defect(R), tol)


def is_normal(R, tol=1e-10):
    return _defect_ok(R, normal_defect(R), tol)


def smallest_singular_values(R):
    out = np.full(R.grid.size, np.inf)
    for n, _, cells, stack in R.matrices.blocks():
        if n:
            out[cells] = np.linalg.svd(stack, compute_uv=False)[:, -1]
    return out


def default_lower_bound(bound, grid):
    """Smallest certifiable uniform lower bound on a grid: ``max(1e-8 K, K / n)``.

    A sampled minimum within one cell spacing (scaled by K) of zero is
    consistent with a zero between the sample points, as for omega * I.
    """
    return max(1e-8 * bound, bound / grid.n)


def invert(R, lower_bound_tol=None):
    """Cellwise inverse, provided [R](omega) is uniformly bounded below.

    The default bound is :func:`default_lower_bound`.
    """
    if lower_bound_tol is None:
        lower_bound_tol = default_lower_bound(op_norm(R), R.grid)
    smin = smallest_singular_values(R)
    t, value = worst_cell(smin)
    if value < lower_bound_tol:
        omega = tuple(float(x) for x in R.grid.cells[t])
        raise InvertibilityError(
            f"not uniformly bounded below: smallest singular value {value:.3g} "
            f"< {lower_bound_tol:.3g} at cell {t} (omega={omega})",
            cell=t,
            value=value,
        )
    return R.map(np.linalg.inv)


# -- kernels ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KernelField:
    """Per-cell orthonormal basis of ker([R](omega)) and the rank partition."""

    grid: object
    basis: MatrixField
    rank: np.ndarray

    @property
    def nullity(self):
        return self.basis.cols

    @property
    def dims(self):
        return self.basis.rows

    def rank_masks(self):
        """Masks B_k = {rank = k} for k = 0..max dimension."""
        top = int(self.dims.max(initial=0))
        return {k: MeasurableMask(self.grid, self.rank == k) for k in range(top + 1)}

    @property
    def support(self):
        """Cells where the kernel is nonzero."""
        return MeasurableMask(self.grid, self.nullity > 0)

    def __getitem__(self, t):
        return self.basis[t]


def numerical_rank(stack, rank_tol, scale):
    """Number of singular values above ``rank_tol * scale`` for each matrix in a stack."""
    s = np.linalg.svd(stack, compute_uv=False)
    return np.sum(s > rank_tol * scale, axis=-1)


def _orthonormalize(V):
    """Gram-Schmidt on the columns of a stack, with positive diagonal in R."""
    Q, Rr = np.linalg.qr(V)
    d = np.diagonal(Rr, axis1=1, axis2=2)
    phase = np.where(np.abs(d) > 0, d / np.where(np.abs(d) > 0, np.abs(d), 1), 1)
    return Q * phase.conj()[:, None, :]


def _pivots_exact(stack, k):
    """For each matrix pick the k x k submatrix of largest |det|.

    Row and column sets are enumerated lexicographically; ``argmax`` keeps
    the first maximum, which is the lexicographic tie-break.
    """
    n = stack.shape[1]
    combos = list(itertools.combinations(range(n), k))
    pairs = [(rc, cc) for rc in combos for cc in combos]
    dets = np.empty((stack.shape[0], len(pairs)))
    for p, (rc, cc) in enumerate(pairs):
        dets[:, p] = np.abs(np.linalg.det(stack[:, rc][:, :, cc]))
    choice = np.argmax(dets, axis=1)
    return [pairs[c] for c in choice]


def _pivot_qr(m, k):
    """Column-pivoted QR choice of a k x k pivot block, for large n."""
    _, _, cperm = scipy.linalg.qr(m, pivoting=True, mode="economic")
    cols = tuple(sorted(cperm[:k]))
    _, _, rperm = scipy.linalg.qr(m[:, cols].T, pivoting=True, mode="economic")
    rows = tuple(sorted(rperm[:k]))
    return rows, cols


def _kernel_from_pivot(m, rows, cols):
    """Kernel basis from an invertible pivot block M_h: x = -M_h^{-1} c for each free column."""
    n = m.shape[1]
    free = [j for j in range(n) if j not in cols]
    Mh = m[np.ix_(rows, cols)]
    C = m[np.ix_(rows, free)]
    V = np.zeros((n, len(free)), dtype=complex)
    V[list(cols), :] = -np.linalg.solve(Mh, C)
    V[free, np.arange(len(free))] = 1.0
    return V


def kernel_field(R, rank_tol=1e-8, scale=None):
    """Orthonormal kernel bases of [R](omega) built from pivot submatrices.

    Per cell: the numerical rank k counts singular values above
    ``rank_tol * scale`` (``scale`` defaults to K_R); a k x k pivot block is
    selected deterministically; kernel vectors come from the explicit
    solve against the pivot block and are then orthonormalized.
    """
    if scale is None:
        scale = op_norm(R) or 1.0
    N = R.grid.size
    width = R.frame.max_dim
    data = np.zeros((N, width, width), dtype=complex)
    rank = np.zeros(N, dtype=int)
    nullity = np.zeros(N, dtype=int)
    for n, _, cells, stack in R.matrices.blocks():
        if n == 0:
            continue
        ranks = numerical_rank(stack, rank_tol, scale)
        rank[cells] = ranks
        nullity[cells] = n - ranks
        for k in np.unique(ranks):
            sel = ranks == k
            sub_cells = cells[sel]
            sub = stack[sel]
            if k == n:
                continue
            if k == 0:
                data[sub_cells, :n, :n] = np.eye(n)
                continue
            if n <= EXACT_PIVOT_MAX_DIM:
                pivots = _pivots_exact(sub, k)
            else:
                pivots = [_pivot_qr(m, k) for m in sub]
            # cells sharing a pivot block are solved together
            by_pivot = {}
            for i, h in enumerate(pivots):
                by_pivot.setdefault(h, []).append(i)
            for (rows, cols), idx in by_pivot.items():
                V = np.stack([_kernel_from_pivot(sub[i], rows, cols) for i in idx])
                data[sub_cells[idx], :n, : n - k] = _orthonormalize(V)
    basis = MatrixField(R.grid, data, R.dims, nullity)
    return KernelField(R.grid, basis, rank)
