"""s-eigenvalues, the angle test, and s-diagonalizations of range-operator fields.

An s-diagonalization splits V into a direct sum of s-eigenspaces V_a, on
each of which L acts as the convolution-type operator Lambda_a. Fiberwise
this is a decomposition of J(omega) into eigenspaces of [R](omega); it lifts
to V exactly when every fiber is diagonalizable and the cosine C_b of the
angle between the eigenspace complements stays uniformly below 1.
"""

import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
import scipy.linalg

from .eigen import (
    diagonalizable_field,
    eigenspace_field,
    fiber_spectra,
    paste_eigenvalues,
)
from .errors import (
    DefectiveFiberError,
    InvertibilityError,
    NotNormalError,
    worst_cell,
)
from .fiberize import LatticeWindow
from .fields import MatrixField, MeasurableMask, ess_sup
from .rangeop import KernelField, default_lower_bound, is_normal, op_norm

DEFAULT_FIT_DEGREE = 8
DEFAULT_MARGIN = 0.01
FIT_WARN_RESIDUAL = 1e-8
INTERSECTION_TOL = 1e-8


# -- symbols ---------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SymbolSequence:
    """Finite-support sequence a on the window ``|k| <= radius``.

    ``fit_residual`` is the max deviation from the field it was fitted to
    (0 for sequences given exactly).
    """

    d: int
    radius: int
    coeffs: np.ndarray
    fit_residual: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if c.size != self.window.M:
            raise ValueError(f"expected {self.window.M} coefficients, got {c.size}")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)

    @cached_property
    def window(self):
        return LatticeWindow(self.d, self.radius)

    @property
    def fit_warning(self):
        return self.fit_residual > FIT_WARN_RESIDUAL

    def evaluate(self, grid):
        """ahat(omega) = sum_k a_k exp(-2 pi i <omega, k>) at every cell."""
        if grid.d != self.d:
            raise ValueError("grid dimension does not match symbol")
        return grid.characters(self.window.points) @ self.coeffs

    def sup_norm(self, grid):
        return float(np.abs(self.evaluate(grid)).max())

    def __getitem__(self, k):
        return self.coeffs[self.window.index(k)]

    @classmethod
    def from_terms(cls, d, terms):
        """From a dict ``{k: coefficient}``."""
        radius = max([0, *(int(np.abs(np.atleast_1d(k)).max()) for k in terms)])
        win = LatticeWindow(d, radius)
        c = np.zeros(win.M, dtype=complex)
        for k, v in terms.items():
            c[win.index(k)] += v
        return cls(d, radius, c)

    @classmethod
    def constant(cls, value, d=1):
        return cls.from_terms(d, {(0,) * d: value})

    @classmethod
    def delta(cls, k, d=1):
        return cls.from_terms(d, {tuple(np.atleast_1d(k)): 1.0})


def symbol_from_field(values, grid, fit_degree=DEFAULT_FIT_DEGREE, mask=None):
    """Least-squares trig-polynomial fit of a sampled symbol, on ``mask`` only.

    Any bounded extension of lambda off the mask is acceptable, so the fit
    only needs to match there. The max residual on the mask is recorded on
    the returned sequence; it is not raised as an error.
    """
    values = np.asarray(values, dtype=complex)
    if not np.isfinite(values).all():
        raise ValueError("symbol field must be bounded")
    member = np.ones(grid.size, dtype=bool) if mask is None else mask.member
    win = LatticeWindow(grid.d, fit_degree)
    E = grid.characters(win.points)[member]
    target = values[member]
    if target.size == 0:
        return SymbolSequence(grid.d, 0, np.zeros(1))
    coeffs, *_ = np.linalg.lstsq(E, target, rcond=None)
    # drop round-off noise so exact symbols come back with exact support
    coeffs[np.abs(coeffs) < 1e-14 * max(1.0, np.abs(coeffs).max())] = 0
    residual = float(np.abs(E @ coeffs - target).max())
    return SymbolSequence(grid.d, fit_degree, coeffs, residual)


# -- angles ----------------------------------------------------------------


def _projector(basis):
    basis = np.asarray(basis, dtype=complex)
    return basis @ basis.conj().T


def angle_cb_projectors(projectors, tol=INTERSECTION_TOL):
    """c_b = ||P_r ... P_1 P_{M_0^perp}|| for orthogonal projectors P_j onto M_j.

    M_0 is the intersection of all M_j: the common null space of the
    stacked complement projectors ``I - P_j``.
    """
    n = projectors[0].shape[0]
    if n == 0:
        return 0.0
    eye = np.eye(n)
    stacked = np.vstack([eye - P for P in projectors])
    _, s, vh = np.linalg.svd(stacked)
    s_full = np.zeros(n)
    s_full[: s.size] = s
    inter = vh[s_full <= tol].conj().T
    prod = eye - _projector(inter)
    for P in projectors:
        prod = P @ prod
    return float(np.linalg.norm(prod, 2))


def angle_cb(subspaces, tol=INTERSECTION_TOL):
    """Cosine of the angle of a tuple of subspaces given by orthonormal bases."""
    if len(subspaces) < 2:
        raise ValueError("angle of a tuple needs at least two subspaces")
    dims = {np.asarray(b).shape[0] for b in subspaces}
    if len(dims) != 1:
        raise ValueError("subspaces must share the ambient dimension")
    return angle_cb_projectors([_projector(b) for b in subspaces], tol)


def _nonzero_eigenspaces(eigenspaces, t):
    return [E[t] for E in eigenspaces if E.nullity[t] > 0]


def cb_field(R, pasted, eigenspaces=None, rank_tol=1e-8):
    """C_b(omega): angle cosine of the orthogonal complements of the eigenspaces.

    Cells with at most one eigenspace get 0. Raises
    :class:`DefectiveFiberError` when the eigenspaces of some cell do not
    add up to its full dimension.
    """
    bound = op_norm(R)
    if eigenspaces is None:
        eigenspaces = [eigenspace_field(R, lam, rank_tol, bound) for lam in pasted]
    total = sum((E.nullity for E in eigenspaces), np.zeros(R.grid.size, dtype=int))
    defect = MeasurableMask(R.grid, total != R.dims)
    if not defect.is_empty():
        raise DefectiveFiberError(
            f"defective fibers on {defect.count} cells (measure {defect.measure:.4g})",
            defect,
        )
    out = np.zeros(R.grid.size)
    for t in range(R.grid.size):
        spaces = _nonzero_eigenspaces(eigenspaces, t)
        if len(spaces) < 2:
            continue
        n = R.dims[t]
        complements = [np.eye(n) - _projector(E) for E in spaces]
        out[t] = angle_cb_projectors(complements)
    return out


# -- decompositions --------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SEigenpair:
    """An s-eigenvalue (sampled symbol and its fit) with its s-eigenspace."""

    index: int
    values: np.ndarray
    symbol: SymbolSequence
    eigenspace: KernelField
    spectrum: MeasurableMask


@dataclass(frozen=True, eq=False)
class SDiagonalization:
    pairs: list
    g: int
    cb_sup: float
    bound: float
    cluster_tol: float
    rank_tol: float
    grid: object = field(repr=False)
    dims: np.ndarray = field(repr=False)

    @property
    def m(self):
        return len(self.pairs)

    @property
    def beta(self):
        """Minimal decomposition size; equals g for s-diagonalizable operators."""
        return self.g

    @property
    def minimal(self):
        return self.m == self.beta

    @property
    def nested(self):
        return all(b.spectrum.issubset(a.spectrum) for a, b in zip(self.pairs, self.pairs[1:]))

    def stacked_basis(self, t):
        """Eigenspace bases of cell t side by side, with their column blocks."""
        n = self.dims[t]
        blocks, cols, start = [], [], 0
        for p in self.pairs:
            E = p.eigenspace[t]
            blocks.append(slice(start, start + E.shape[1]))
            cols.append(E)
            start += E.shape[1]
        S = np.hstack(cols) if cols else np.zeros((n, 0))
        return S.reshape(n, start), blocks


@dataclass(frozen=True, eq=False)
class Decision:
    verdict: bool
    reason: str
    g: int
    cb_sup: float
    defect: MeasurableMask
    decomposition: SDiagonalization = None
    spectra: object = field(default=None, repr=False)


def build_decomposition(
    R,
    spectra=None,
    cluster_tol=None,
    rank_tol=1e-8,
    fit_degree=DEFAULT_FIT_DEGREE,
    eigenspaces=None,
    cb=None,
):
    """Decomposition into g eigenspace fields with nested spectra C_1 >= C_2 >= ...

    Requires diagonalizable fibers; does not apply the angle test (see
    :func:`decide_s_diagonalizable`), so it also serves fields whose
    eigenspace sum is not closed when only a sub-mask is of interest.
    """
    bound = op_norm(R)
    if spectra is None:
        spectra = fiber_spectra(R, cluster_tol)
    pasted = paste_eigenvalues(spectra, bound)
    if eigenspaces is None:
        eigenspaces = [eigenspace_field(R, lam, rank_tol, bound) for lam in pasted]
    if cb is None:
        cb = cb_field(R, pasted, eigenspaces, rank_tol)
    pairs = []
    for lam, E in zip(pasted, eigenspaces):
        symbol = symbol_from_field(lam.values, R.grid, fit_degree, lam.support)
        pairs.append(SEigenpair(lam.index, lam.values, symbol, E, E.support))
    return SDiagonalization(
        pairs=pairs,
        g=spectra.g,
        cb_sup=float(cb.max(initial=0.0)),
        bound=bound,
        cluster_tol=spectra.cluster_tol,
        rank_tol=rank_tol,
        grid=R.grid,
        dims=R.dims.copy(),
    )


def decide_s_diagonalizable(
    R,
    tol_angle_margin=DEFAULT_MARGIN,
    cluster_tol=None,
    rank_tol=1e-8,
    fit_degree=DEFAULT_FIT_DEGREE,
):
    """Decide s-diagonalizability: diagonalizable fibers and ess sup C_b <= 1 - margin.

    On YES the returned decision carries the minimal nested decomposition.
    """
    bound = op_norm(R)
    spectra = fiber_spectra(R, cluster_tol)
    ok, defect = diagonalizable_field(R, spectra, rank_tol, bound)
    if not ok:
        return Decision(False, "defective fibers", spectra.g, float("nan"), defect, None, spectra)
    pasted = paste_eigenvalues(spectra, bound)
    eigenspaces = [eigenspace_field(R, lam, rank_tol, bound) for lam in pasted]
    try:
        cb = cb_field(R, pasted, eigenspaces, rank_tol)
    except DefectiveFiberError as exc:
        return Decision(False, "defective fibers", spectra.g, float("nan"), exc.mask, None, spectra)
    cb_sup = ess_sup(cb) if cb.size else 0.0
    if cb_sup > 1 - tol_angle_margin:
        return Decision(False, "angle degeneration", spectra.g, cb_sup, defect, None, spectra)
    dec = build_decomposition(
        R, spectra, rank_tol=rank_tol, fit_degree=fit_degree, eigenspaces=eigenspaces, cb=cb
    )
    for j, p in enumerate(dec.pairs, start=1):
        expected = MeasurableMask(R.grid, (spectra.dims > 0) & (spectra.k >= j))
        if p.spectrum != expected:
            raise AssertionError(f"spectrum of pair {j} is not {{k >= {j}}}")
    return Decision(True, "", spectra.g, cb_sup, defect, dec, spectra)


# -- synthesis -------------------------------------------------------------


def spectral_synthesis(dec, R, normal_tol=1e-10):
    """Per-cell ``||[R] - sum_j lambda_j P_j||`` with orthogonal eigenprojectors P_j."""
    if not is_normal(R, normal_tol):
        raise NotNormalError("operator field is not normal; use oblique_synthesis")
    out = np.zeros(R.grid.size)
    for t in np.flatnonzero(R.dims > 0):
        recon = sum(p.values[t] * _projector(p.eigenspace[t]) for p in dec.pairs)
        out[t] = np.linalg.norm(R[t] - recon, 2)
    return out


def oblique_projectors(dec, t):
    """Oblique projectors Q_j of cell t along the direct-sum decomposition."""
    S, blocks = dec.stacked_basis(t)
    Sinv = np.linalg.inv(S)
    return [S[:, b] @ Sinv[b, :] for b in blocks], np.linalg.cond(S)


def oblique_synthesis(dec, R, mask=None, cb=None):
    """Per-cell ``||[R] - sum_j lambda_j Q_j||`` with oblique projectors Q_j.

    Warns when the stacked eigenbasis on some cell of ``mask`` has condition
    number above the heuristic ``1 / (1 - ess sup C_b)^2``.
    """
    member = np.ones(R.grid.size, dtype=bool) if mask is None else mask.member
    out = np.zeros(R.grid.size)
    conds = np.ones(R.grid.size)
    for t in np.flatnonzero((R.dims > 0) & member):
        Q, conds[t] = oblique_projectors(dec, t)
        recon = sum(p.values[t] * q for p, q in zip(dec.pairs, Q))
        out[t] = np.linalg.norm(R[t] - recon, 2)
    c = dec.cb_sup if cb is None else float(np.max(cb[member], initial=0.0))
    limit = np.inf if c >= 1 else 1.0 / (1.0 - c) ** 2
    if conds[member].max(initial=1.0) > limit:
        t = int(np.argmax(np.where(member, conds, 0)))
        warnings.warn(
            f"stacked eigenbasis ill-conditioned: cond {conds[t]:.3g} at cell {t} "
            f"exceeds heuristic bound {limit:.3g}",
            RuntimeWarning,
            stacklevel=2,
        )
    return out


# -- derived decompositions ------------------------------------------------


def invert_decomposition(dec, lower_bound_tol=None, fit_degree=DEFAULT_FIT_DEGREE):
    """Decomposition of L^{-1}: symbols 1/ahat_j, identical eigenspaces."""
    if lower_bound_tol is None:
        lower_bound_tol = default_lower_bound(dec.bound, dec.grid)
    for p in dec.pairs:
        mod = np.where(p.spectrum.member, np.abs(p.values), np.inf)
        t, value = worst_cell(mod)
        if value < lower_bound_tol:
            raise InvertibilityError(
                f"s-eigenvalue {p.index} not bounded below: |ahat| = {value:.3g} "
                f"< {lower_bound_tol:.3g} at cell {t}",
                cell=t,
                value=value,
            )
    inv_bound = max(
        [0.0, *(float(np.abs(1 / p.values[p.spectrum.member]).max(initial=0)) for p in dec.pairs)]
    )
    pairs = []
    for p in dec.pairs:
        on = p.spectrum.member
        vals = np.where(on, 1 / np.where(on, p.values, 1), inv_bound + p.index)
        symbol = symbol_from_field(vals, dec.grid, fit_degree, p.spectrum)
        pairs.append(replace(p, values=vals, symbol=symbol))
    return replace(dec, pairs=pairs, bound=inv_bound)


def _restrict_kernel(E, mask):
    keep = mask.member
    nullity = np.where(keep, E.nullity, 0)
    data = E.basis.data * keep[:, None, None]
    basis = MatrixField(E.grid, data, E.dims, nullity)
    return KernelField(E.grid, basis, np.where(keep, E.rank, E.dims))


def split_spectrum(dec, j, mask, fit_degree=DEFAULT_FIT_DEGREE):
    """Refine pair j by splitting its spectrum into ``sigma_j & mask`` and ``sigma_j - mask``.

    Each half gets the symbol chi_A lambda_j and the eigenspace of pair j
    cut down to its own half of the spectrum.
    """
    pair = dec.pairs[j - 1]
    parts = [pair.spectrum & mask, pair.spectrum - mask]
    if any(part.is_empty() for part in parts):
        raise ValueError("both halves of a split must be nonempty")
    new = []
    for part in parts:
        vals = np.where(part.member, pair.values, 0)
        symbol = symbol_from_field(vals, dec.grid, fit_degree, part)
        E = _restrict_kernel(pair.eigenspace, part)
        new.append(SEigenpair(pair.index, vals, symbol, E, part))
    pairs = [*dec.pairs[: j - 1], *new, *dec.pairs[j:]]
    return replace(dec, pairs=pairs)


def h_field(dec):
    """h(omega) = number of pairs whose spectrum contains omega."""
    return sum((p.spectrum.member.astype(int) for p in dec.pairs), np.zeros(dec.grid.size, dtype=int))


def verify_h_equals_k(dec, spectra):
    k = np.where(spectra.dims > 0, spectra.k, 0)
    return bool(np.array_equal(h_field(dec), k))


# -- invariants ------------------------------------------------------------


def check_decomposition(dec, R, spectra, residual_tol=1e-8):
    """Evaluate the structural invariants of a decomposition; returns name -> bool."""
    scale = dec.bound or 1.0
    N = R.grid.size
    direct, span, resid, ortho, floor = True, True, True, True, True
    for t in np.flatnonzero(R.dims > 0):
        n = R.dims[t]
        S, blocks = dec.stacked_basis(t)
        if S.shape[1] != n:
            direct = False
            continue
        svals = np.linalg.svd(S, compute_uv=False)
        if svals[-1] <= INTERSECTION_TOL:
            direct = False
        if svals[-1] < (1 - dec.cb_sup) - 1e-12:
            floor = False
        B = R.frame[t]
        ambient = B @ S
        if np.degrees(scipy.linalg.subspace_angles(ambient, B)).max(initial=0) > np.degrees(1e-8):
            span = False
        for p, b in zip(dec.pairs, blocks):
            E = S[:, b]
            if E.shape[1] == 0:
                continue
            if np.linalg.norm(E.conj().T @ E - np.eye(E.shape[1])) > 1e-10:
                ortho = False
            if np.linalg.norm(R[t] @ E - p.values[t] * E) > residual_tol * scale:
                resid = False
    support_ok = all(
        np.array_equal(p.eigenspace.nullity > 0, p.spectrum.member) for p in dec.pairs
    )
    separated, trivial = True, True
    for a in range(dec.m):
        for b in range(a + 1, dec.m):
            pa, pb = dec.pairs[a], dec.pairs[b]
            both = pa.spectrum.member & pb.spectrum.member
            if (np.abs(pa.values - pb.values)[both] < dec.cluster_tol).any():
                separated = False
            for t in np.flatnonzero(both):
                joint = np.hstack([pa.eigenspace[t], pb.eigenspace[t]])
                if np.linalg.svd(joint, compute_uv=False)[-1] <= INTERSECTION_TOL:
                    trivial = False
    diag_ok, _ = diagonalizable_field(R, spectra, dec.rank_tol, dec.bound)
    covered = np.zeros(N, dtype=bool)
    for p in dec.pairs:
        covered |= p.spectrum.member
    return {
        "direct_sum": direct,
        "span_equals_J": span,
        "orthonormal_bases": ortho,
        "eigen_residual": resid,
        "support_matches_kernel": support_ok,
        "symbols_separated": separated,
        "trivial_intersections": trivial,
        "spectra_cover_sigma": bool(np.array_equal(covered, R.dims > 0)),
        "h_equals_k": verify_h_equals_k(dec, spectra),
        "diagonalizable": diag_ok,
        "angle_floor": floor,
    }


# -- storage ---------------------------------------------------------------


def save_decomposition(dec, path):
    """Write a decomposition (sampled symbols, fits, eigenspace bases, masks) to ``.npz``."""
    arrays = {
        "meta": np.array([dec.g, dec.cb_sup, dec.bound, dec.cluster_tol, dec.rank_tol]),
        "grid": np.array([dec.grid.d, dec.grid.n]),
        "dims": dec.dims,
        "count": np.array(dec.m),
    }
    for j, p in enumerate(dec.pairs, start=1):
        arrays[f"index_{j}"] = np.array(p.index)
        arrays[f"lambda_{j}"] = p.values
        arrays[f"symbol_{j}"] = p.symbol.coeffs
        arrays[f"symbol_meta_{j}"] = np.array([p.symbol.radius, p.symbol.fit_residual])
        arrays[f"basis_{j}"] = p.eigenspace.basis.data
        arrays[f"nullity_{j}"] = p.eigenspace.nullity
        arrays[f"rank_{j}"] = p.eigenspace.rank
        arrays[f"spectrum_{j}"] = p.spectrum.member
    np.savez_compressed(path, **arrays)


def load_decomposition(path):
    from .fields import FrequencyGrid

    with np.load(path) as z:
        g, cb_sup, bound, cluster_tol, rank_tol = z["meta"]
        grid = FrequencyGrid(int(z["grid"][0]), int(z["grid"][1]))
        dims = z["dims"]
        pairs = []
        for j in range(1, int(z["count"]) + 1):
            radius, resid = z[f"symbol_meta_{j}"]
            symbol = SymbolSequence(grid.d, int(radius), z[f"symbol_{j}"], float(resid))
            basis = MatrixField(grid, z[f"basis_{j}"], dims, z[f"nullity_{j}"])
            E = KernelField(grid, basis, z[f"rank_{j}"])
            spectrum = MeasurableMask(grid, z[f"spectrum_{j}"])
            pairs.append(SEigenpair(int(z[f"index_{j}"]), z[f"lambda_{j}"], symbol, E, spectrum))
    return SDiagonalization(
        pairs, int(g), float(cb_sup), float(bound), float(cluster_tol), float(rank_tol), grid, dims
    )
