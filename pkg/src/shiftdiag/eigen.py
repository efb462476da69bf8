"""Per-fiber eigenvalues and their pasting into globally defined functions.

On every cell the distinct eigenvalues of [R](omega) are listed in a fixed
canonical order (real part, then imaginary part, then modulus). Slot j of
that list, read across all cells, gives the pasted function lambda_j; cells
with fewer than j distinct eigenvalues receive the padding value K_R + j,
which is never an eigenvalue because every eigenvalue has modulus <= K_R.

The pasted functions are correct cell by cell but need not be continuous
across eigenvalue crossings, where the canonical order can switch branches.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import EigenSolverError
from .fields import MeasurableMask
from .rangeop import kernel_field, numerical_rank, op_norm


def default_cluster_tol(bound):
    return 1e-6 * max(1.0, bound)


def _canonical_order(values, tol):
    # real parts closer than tol count as equal so conjugate pairs sort by Im
    key_re = np.round(values.real / tol)
    return np.lexsort((np.abs(values), values.imag, key_re))


def cluster_eigenvalues(values, tol):
    """Single-linkage clusters of ``values`` at distance ``tol``.

    Returns ``(representatives, multiplicities)`` in canonical order; each
    representative is the mean of its cluster.
    """
    values = np.asarray(values, dtype=complex)
    n = values.size
    parent = list(range(n))

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    for a in range(n):
        for b in range(a + 1, n):
            if abs(values[a] - values[b]) <= tol:
                ra, rb = find(a), find(b)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
    roots = sorted({find(a) for a in range(n)})
    reps = np.array([values[[find(a) == r for a in range(n)]].mean() for r in roots])
    mult = np.array([sum(find(a) == r for a in range(n)) for r in roots], dtype=int)
    order = _canonical_order(reps, tol)
    return reps[order], mult[order]


@dataclass(frozen=True, eq=False)
class FiberSpectrum:
    """Eigenvalues of [R](omega) with multiplicity plus their distinct clusters.

    ``eigenvalues`` and ``distinct`` are padded with NaN beyond ``dims`` and
    ``count`` respectively.
    """

    grid: object
    dims: np.ndarray
    eigenvalues: np.ndarray
    distinct: np.ndarray
    multiplicity: np.ndarray
    count: np.ndarray
    cluster_tol: float

    @property
    def k(self):
        """k(omega) = number of distinct eigenvalues."""
        return self.count

    @cached_property
    def g(self):
        """ess sup of k(omega) over the spectrum of V (0 when it is empty)."""
        return int(self.count[self.dims > 0].max(initial=0))

    def A(self, n, i):
        """A_{n,i} = {dim J = n and exactly i distinct eigenvalues}."""
        return MeasurableMask(self.grid, (self.dims == n) & (self.count == i))

    def B(self, i):
        """B_i = cells of sigma(V) with exactly i distinct eigenvalues."""
        return MeasurableMask(self.grid, (self.dims > 0) & (self.count == i))

    def C(self, j):
        """C_j = cells of sigma(V) with at least j distinct eigenvalues."""
        return MeasurableMask(self.grid, (self.dims > 0) & (self.count >= j))

    def distinct_at(self, t):
        return self.distinct[t, : self.count[t]]


def fiber_spectra(R, cluster_tol=None):
    """Eigenvalues of every fiber matrix, clustered into distinct values."""
    if cluster_tol is None:
        cluster_tol = default_cluster_tol(op_norm(R))
    if not cluster_tol > 0:
        raise ValueError("cluster_tol must be positive")
    N = R.grid.size
    width = R.frame.max_dim
    eig = np.full((N, width), np.nan, dtype=complex)
    for n, _, cells, stack in R.matrices.blocks():
        if n == 0:
            continue
        try:
            vals = np.linalg.eigvals(stack)
        except np.linalg.LinAlgError:
            vals = None
        if vals is None or not np.isfinite(vals).all():
            for t, m in zip(cells, stack):
                try:
                    v = np.linalg.eigvals(m)
                except np.linalg.LinAlgError as exc:
                    raise EigenSolverError(f"eigen-solver failed at cell {t}: {exc}", t) from exc
                if not np.isfinite(v).all():
                    raise EigenSolverError(f"eigen-solver returned non-finite values at cell {t}", t)
            raise EigenSolverError("eigen-solver failed on a batch", int(cells[0]))
        eig[cells, :n] = vals

    distinct = np.full((N, width), np.nan, dtype=complex)
    mult = np.zeros((N, width), dtype=int)
    count = np.zeros(N, dtype=int)
    for t in np.flatnonzero(R.dims > 0):
        n = R.dims[t]
        vals = eig[t, :n][_canonical_order(eig[t, :n], cluster_tol)]
        eig[t, :n] = vals
        reps, m = cluster_eigenvalues(vals, cluster_tol)
        distinct[t, : reps.size] = reps
        mult[t, : reps.size] = m
        count[t] = reps.size
    return FiberSpectrum(R.grid, R.dims.copy(), eig, distinct, mult, count, cluster_tol)


@dataclass(frozen=True, eq=False)
class PastedEigenvalue:
    """One pasted eigenvalue function lambda_j (j counts from 1)."""

    index: int
    values: np.ndarray
    support: MeasurableMask
    padding: float


def paste_eigenvalues(spectra, bound):
    """The g functions lambda_1..lambda_g pasted from the per-cell distinct eigenvalues.

    On a cell with i distinct eigenvalues, slots 1..i carry them in canonical
    order and slots j > i carry ``bound + j``.
    """
    out = []
    for j in range(1, spectra.g + 1):
        support = spectra.C(j)
        padding = float(bound) + j
        values = np.where(support.member, spectra.distinct[:, j - 1], padding)
        out.append(PastedEigenvalue(j, values.astype(complex), support, padding))
    return out


def eigenspace_field(R, lam, rank_tol=1e-8, bound=None):
    """ker(R(omega) - lambda_j(omega) I) per cell."""
    if bound is None:
        bound = op_norm(R)
    values = lam.values if isinstance(lam, PastedEigenvalue) else lam
    return kernel_field(R.shift(values), rank_tol, scale=bound or 1.0)


def geometric_multiplicity_sum(R, spectra, rank_tol=1e-8, bound=None):
    """Per cell, sum over distinct eigenvalues mu of dim ker(R - mu I)."""
    if bound is None:
        bound = op_norm(R)
    scale = bound or 1.0
    total = np.zeros(R.grid.size, dtype=int)
    for n, _, cells, stack in R.matrices.blocks():
        if n == 0:
            continue
        counts = spectra.count[cells]
        for j in range(int(counts.max(initial=0))):
            sel = counts > j
            mu = spectra.distinct[cells[sel], j]
            shifted = stack[sel] - mu[:, None, None] * np.eye(n)
            total[cells[sel]] += n - numerical_rank(shifted, rank_tol, scale)
    return total


def diagonalizable_field(R, spectra, rank_tol=1e-8, bound=None):
    """Whether every fiber is diagonalizable, and the mask of defective cells."""
    geo = geometric_multiplicity_sum(R, spectra, rank_tol, bound)
    defect = MeasurableMask(R.grid, geo != R.dims)
    return defect.is_empty(), defect


def charpoly_residual(R, spectra):
    """Per cell ``||prod_i ([R] - lambda_i I)||`` scaled by ``max(1, ||[R]||)**n``."""
    out = np.zeros(R.grid.size)
    for t in np.flatnonzero(R.dims > 0):
        m = R[t]
        n = m.shape[0]
        acc = np.eye(n, dtype=complex)
        for lam in spectra.eigenvalues[t, :n]:
            acc = acc @ (m - lam * np.eye(n))
        out[t] = np.linalg.norm(acc, 2) / max(1.0, np.linalg.norm(m, 2)) ** n
    return out
