"""Problem files: YAML description of a generator set and an operator.

Layout::

    grid: {d: 1, n: 512}
    window: {K: 1}
    generators:
      - components:
          - {k: [0], poly: 1.0}
          - {k: [1], poly: [[[1], 0.5, 0.0]]}
      - table: more_generators.txt
    operator:
      matrix:                  # l x l, generator coordinates
        - [1.0, 0.0]
        - [[[[1], 1.0, 0.0]], 2.0]
    tolerances: {rank: 1.0e-8, cluster: null, margin: 0.01, fit_degree: 8}

A polynomial is either a number (a constant) or a list of terms
``[k, re, im]`` meaning ``(re + i im) exp(-2 pi i <omega, k>)``. A
generator table is a text file with lines ``m_1 .. m_d k_1 .. k_d re im``:
the fiber component at lattice point m gets the term at frequency k.
``operator: {kind: frame}`` selects the frame operator of the generators.
"""

import hashlib
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .errors import ProblemFormatError
from .fiberize import GeneratorSet, LatticeWindow, frame_from_generators
from .fields import FrequencyGrid, trig_poly
from .rangeop import (
    frame_operator_action,
    generator_matrix_action,
    matrix_rep,
)

DEFAULT_TOLERANCES = {"rank": 1e-8, "cluster": None, "margin": 0.01, "fit_degree": 8}


def _poly_terms(spec, d, where):
    """Normalize a polynomial spec to a sorted list of ``(k, complex)``."""
    if isinstance(spec, (int, float)):
        return [((0,) * d, complex(spec))] if spec != 0 else []
    if not isinstance(spec, list):
        raise ProblemFormatError(f"{where}: polynomial must be a number or a list of terms")
    acc = {}
    for term in spec:
        if not (isinstance(term, list) and len(term) == 3):
            raise ProblemFormatError(f"{where}: term must be [k, re, im], got {term!r}")
        k, re, im = term
        k = tuple(int(x) for x in np.atleast_1d(k))
        if len(k) != d:
            raise ProblemFormatError(f"{where}: frequency {k} has wrong dimension")
        acc[k] = acc.get(k, 0) + complex(float(re), float(im))
    return sorted((k, c) for k, c in acc.items() if c != 0)


def _dump_poly(terms):
    return [[list(k), float(c.real), float(c.imag)] for k, c in terms]


@dataclass
class Problem:
    d: int
    n: int
    K: int
    generators: list
    operator: object
    tolerances: dict = field(default_factory=lambda: dict(DEFAULT_TOLERANCES))
    base_dir: Path = field(default=Path("."), compare=False, repr=False)

    # generators[i] is either {"components": [(m, terms), ...]} or {"table": path}

    @classmethod
    def from_dict(cls, data, base_dir=Path(".")):
        if not isinstance(data, dict):
            raise ProblemFormatError("problem must be a mapping")
        try:
            d = int(data["grid"]["d"])
            n = int(data["grid"]["n"])
            K = int(data["window"]["K"])
            gen_specs = data["generators"]
            op_spec = data["operator"]
        except (KeyError, TypeError) as exc:
            raise ProblemFormatError(f"missing or malformed field: {exc}") from exc
        if d < 1 or n < 1 or K < 0:
            raise ProblemFormatError("grid d, n must be >= 1 and K >= 0")
        gens = []
        for i, g in enumerate(gen_specs or []):
            if "table" in g:
                path = Path(g["table"])
                if not (base_dir / path).exists():
                    raise ProblemFormatError(f"generator table not found: {path}")
                gens.append({"table": str(path)})
            elif "components" in g:
                comps = {}
                for c in g["components"]:
                    m = tuple(int(x) for x in np.atleast_1d(c["k"]))
                    if len(m) != d or max(abs(x) for x in m) > K:
                        raise ProblemFormatError(f"generator {i}: lattice point {m} outside window")
                    if m in comps:
                        raise ProblemFormatError(f"generator {i}: lattice point {m} given twice")
                    comps[m] = _poly_terms(c["poly"], d, f"generator {i}")
                gens.append({"components": sorted(comps.items())})
            else:
                raise ProblemFormatError(f"generator {i}: needs 'components' or 'table'")
        if not gens:
            raise ProblemFormatError("at least one generator is required")
        ell = len(gens)
        if op_spec == "frame" or (isinstance(op_spec, dict) and op_spec.get("kind") == "frame"):
            operator = "frame"
        elif isinstance(op_spec, dict) and "matrix" in op_spec:
            rows = op_spec["matrix"]
            if len(rows) != ell or any(len(r) != ell for r in rows):
                raise ProblemFormatError(f"operator matrix must be {ell} x {ell}")
            operator = [[_poly_terms(e, d, "operator") for e in r] for r in rows]
        else:
            raise ProblemFormatError("operator needs 'matrix' or kind: frame")
        tol = dict(DEFAULT_TOLERANCES)
        extra = set(data.get("tolerances") or {}) - set(tol)
        if extra:
            raise ProblemFormatError(f"unknown tolerances: {sorted(extra)}")
        tol.update(data.get("tolerances") or {})
        return cls(d, n, K, gens, operator, tol, base_dir)

    def to_dict(self):
        gens = []
        for g in self.generators:
            if "table" in g:
                gens.append({"table": g["table"]})
            else:
                gens.append(
                    {"components": [{"k": list(m), "poly": _dump_poly(t)} for m, t in g["components"]]}
                )
        if self.operator == "frame":
            op = {"kind": "frame"}
        else:
            op = {"matrix": [[_dump_poly(e) for e in r] for r in self.operator]}
        return {
            "grid": {"d": self.d, "n": self.n},
            "window": {"K": self.K},
            "generators": gens,
            "operator": op,
            "tolerances": dict(self.tolerances),
        }

    def dumps(self):
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def digest(self):
        return hashlib.sha256(self.dumps().encode()).hexdigest()[:16]

    # -- construction --------------------------------------------------

    def grid(self):
        return FrequencyGrid(self.d, self.n)

    def window(self):
        return LatticeWindow(self.d, self.K)

    def _table_components(self, path):
        rows = np.atleast_2d(np.loadtxt(self.base_dir / path, ndmin=2))
        if rows.shape[1] != 2 * self.d + 2:
            raise ProblemFormatError(f"{path}: expected {2 * self.d + 2} columns")
        comps = {}
        for row in rows:
            m = tuple(int(x) for x in row[: self.d])
            k = tuple(int(x) for x in row[self.d : 2 * self.d])
            comps.setdefault(m, {})
            comps[m][k] = comps[m].get(k, 0) + complex(row[-2], row[-1])
        return comps

    def generator_set(self):
        grid, window = self.grid(), self.window()
        components = []
        for g in self.generators:
            if "table" in g:
                comps = self._table_components(g["table"])
            else:
                comps = {m: dict(t) for m, t in g["components"]}
            for m in comps:
                try:
                    window.index(m)
                except KeyError as exc:
                    raise ProblemFormatError(str(exc)) from exc
            components.append(comps)
        return GeneratorSet.from_components(window, grid, components)

    def operator_matrices(self, grid):
        ell = len(self.generators)
        mats = np.zeros((grid.size, ell, ell), dtype=complex)
        for i, row in enumerate(self.operator):
            for j, terms in enumerate(row):
                mats[:, i, j] = trig_poly(grid, dict(terms))
        return mats

    def build(self):
        """Grid, generators, frame and range-operator field of the problem."""
        gens = self.generator_set()
        frame = frame_from_generators(gens, float(self.tolerances["rank"]))
        if self.operator == "frame":
            action = frame_operator_action(gens)
        else:
            action = generator_matrix_action(gens, self.operator_matrices(gens.grid))
        R = matrix_rep(action, frame)
        return gens, frame, R


def load_problem(path):
    """Parse a problem file; bundled problems can be named without a path."""
    p = Path(path)
    if not p.exists():
        name = p.name if p.suffix == ".problem" else p.name + ".problem"
        bundled = resources.files("shiftdiag") / "problems" / name
        if not bundled.is_file():
            raise FileNotFoundError(f"problem file not found: {path}")
        text = bundled.read_text()
        base = Path(str(bundled)).parent
    else:
        text = p.read_text()
        base = p.parent
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ProblemFormatError(f"invalid YAML: {exc}") from exc
    return Problem.from_dict(data, base)


def loads_problem(text, base_dir=Path(".")):
    return Problem.from_dict(yaml.safe_load(text), Path(base_dir))
