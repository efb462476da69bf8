"""Sampled fields over the frequency torus [0,1)^d.

Every measurable-set statement is modelled on a fixed uniform grid: a set is
a boolean mask over the cells, and "almost everywhere" means "on every cell".
Sample points are cell centers ``(t + 0.5) / n``, so no sample falls on the
boundary point 0.

Scalar fields are plain numpy arrays whose first axis runs over cells.
Matrix-valued fields with a cell-dependent dimension are stored padded in a
:class:`MatrixField`; only the leading ``rows[t] x cols[t]`` block of cell
``t`` is meaningful and the padding is kept at zero.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import NullSetError


@dataclass(frozen=True)
class FrequencyGrid:
    """Uniform grid of ``n**d`` cells on [0,1)^d, cells in C (row-major) order."""

    d: int
    n: int

    def __post_init__(self):
        if self.d < 1:
            raise ValueError("dimension d must be >= 1")
        if self.n < 1:
            raise ValueError("n_per_dim must be >= 1")

    @property
    def size(self):
        return self.n ** self.d

    @property
    def shape(self):
        return (self.n,) * self.d

    @cached_property
    def cells(self):
        """Cell centers, shape ``(size, d)``."""
        idx = np.indices(self.shape).reshape(self.d, -1).T
        return (idx + 0.5) / self.n

    def refine(self, factor):
        return FrequencyGrid(self.d, self.n * factor)

    def full(self):
        return MeasurableMask(self, np.ones(self.size, dtype=bool))

    def empty(self):
        return MeasurableMask(self, np.zeros(self.size, dtype=bool))

    def mask(self, predicate):
        """Mask of cells whose center satisfies ``predicate(cells)``.

        ``predicate`` receives the ``(size, d)`` array of centers and must
        return a boolean array of length ``size``.
        """
        member = np.asarray(predicate(self.cells), dtype=bool).reshape(self.size)
        return MeasurableMask(self, member)

    def characters(self, points):
        """Matrix ``e_k(omega_t) = exp(-2 pi i <omega_t, k>)``, shape (size, len(points))."""
        points = np.asarray(points, dtype=float).reshape(-1, self.d)
        return np.exp(-2j * np.pi * (self.cells @ points.T))


@dataclass(frozen=True, eq=False)
class MeasurableMask:
    """Boolean cell mask standing in for a measurable subset of the torus."""

    grid: FrequencyGrid
    member: np.ndarray

    def __post_init__(self):
        member = np.asarray(self.member, dtype=bool)
        if member.shape != (self.grid.size,):
            raise ValueError(
                f"mask has shape {member.shape}, grid expects ({self.grid.size},)"
            )
        member.setflags(write=False)
        object.__setattr__(self, "member", member)

    @property
    def count(self):
        return int(self.member.sum())

    @property
    def measure(self):
        return self.count / self.grid.size

    def is_empty(self):
        return not self.member.any()

    def _check(self, other):
        if other.grid != self.grid:
            raise ValueError("masks live on different grids")

    def __or__(self, other):
        self._check(other)
        return MeasurableMask(self.grid, self.member | other.member)

    def __and__(self, other):
        self._check(other)
        return MeasurableMask(self.grid, self.member & other.member)

    def __sub__(self, other):
        self._check(other)
        return MeasurableMask(self.grid, self.member & ~other.member)

    def __invert__(self):
        return MeasurableMask(self.grid, ~self.member)

    def __eq__(self, other):
        if not isinstance(other, MeasurableMask):
            return NotImplemented
        return self.grid == other.grid and np.array_equal(self.member, other.member)

    def __hash__(self):
        return hash((self.grid, self.member.tobytes()))

    def issubset(self, other):
        self._check(other)
        return not (self.member & ~other.member).any()

    def __repr__(self):
        return f"MeasurableMask(grid={self.grid}, measure={self.measure:.6g})"


def mask_measure(mask):
    """Fraction of cells in ``mask``."""
    return mask.measure


def ess_sup(field, mask=None):
    """Grid surrogate of the essential supremum: max of a real field over a mask."""
    values = np.asarray(field, dtype=float)
    if mask is not None:
        values = values[mask.member]
    if values.size == 0:
        raise NullSetError("ess-sup over null set")
    return float(values.max())


@dataclass(frozen=True, eq=False)
class MatrixField:
    """Per-cell complex matrices with cell-dependent shape, stored padded.

    ``data`` has shape ``(size, max_rows, max_cols)``; cell ``t`` holds the
    ``rows[t] x cols[t]`` leading block.
    """

    grid: FrequencyGrid
    data: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    def __post_init__(self):
        data = np.asarray(self.data, dtype=complex)
        rows = np.asarray(self.rows, dtype=int)
        cols = np.asarray(self.cols, dtype=int)
        if data.ndim != 3 or data.shape[0] != self.grid.size:
            raise ValueError("data must have shape (cells, rows, cols)")
        if rows.shape != (self.grid.size,) or cols.shape != (self.grid.size,):
            raise ValueError("rows/cols must have one entry per cell")
        if (rows > data.shape[1]).any() or (cols > data.shape[2]).any():
            raise ValueError("per-cell shape exceeds padded storage")
        for a in (data, rows, cols):
            a.setflags(write=False)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "rows", rows)
        object.__setattr__(self, "cols", cols)

    def __getitem__(self, t):
        return self.data[t, : self.rows[t], : self.cols[t]]

    def blocks(self):
        """Yield ``(r, c, cells, stack)`` for every distinct per-cell shape.

        ``stack`` has shape ``(len(cells), r, c)``; grouping cells of equal
        shape is what lets per-cell linear algebra run batched.
        """
        yield from _blocks(self.rows, self.cols, self.data)


def _blocks(rows, cols, data):
    keys = np.stack([rows, cols], axis=1)
    for r, c in np.unique(keys, axis=0):
        cells = np.flatnonzero((rows == r) & (cols == c))
        yield int(r), int(c), cells, data[cells, :r, :c]


def pad_stack(mats, rows=None, cols=None):
    """Pack a list of per-cell 2-D arrays into a padded 3-D array."""
    mats = [np.atleast_2d(np.asarray(m, dtype=complex)) for m in mats]
    if rows is None:
        rows = [m.shape[0] for m in mats]
    if cols is None:
        cols = [m.shape[1] for m in mats]
    R = max([0, *rows])
    C = max([0, *cols])
    out = np.zeros((len(mats), R, C), dtype=complex)
    for t, m in enumerate(mats):
        out[t, : rows[t], : cols[t]] = m[: rows[t], : cols[t]]
    return out, np.asarray(rows), np.asarray(cols)


def trig_poly(grid, terms):
    """Evaluate ``sum_k c_k exp(-2 pi i <omega, k>)`` at every cell.

    ``terms`` maps integer tuples ``k`` (length ``d``) to complex coefficients.
    """
    if not terms:
        return np.zeros(grid.size, dtype=complex)
    ks = np.array([np.atleast_1d(k) for k in terms], dtype=float)
    cs = np.array(list(terms.values()), dtype=complex)
    if ks.shape[1] != grid.d:
        raise ValueError("frequency dimension does not match grid")
    return grid.characters(ks) @ cs
