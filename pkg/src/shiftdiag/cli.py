"""Command-line front end.

    shiftdiag analyze|diagonalize|verify|synthesize PROBLEM [options]

Reports are ``key: value`` lines in a fixed order; the closing
``timestamp:`` line is the only run-dependent content. Exit status is 0 on
YES/success, 2 on a NO verdict and 1 on errors.
"""

import argparse
import csv
import datetime
import sys
import warnings
from pathlib import Path

import numpy as np

from . import __version__
from .eigen import fiber_spectra
from .errors import ShiftDiagError
from .problem import load_problem
from .rangeop import is_normal, is_self_adjoint, op_norm
from .sdiag import (
    check_decomposition,
    decide_s_diagonalizable,
    load_decomposition,
    oblique_synthesis,
    save_decomposition,
    spectral_synthesis,
)
from .signal import apply_lambda, apply_operator, fold, synthesize_in_eigenspace

EXIT_OK, EXIT_ERROR, EXIT_NO = 0, 1, 2
VERIFY_SAMPLES = 3
DECOMPOSITION_FILE = "decomposition.npz"


def _fmt(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".10g")
    if value is None:
        return "-"
    return str(value)


class Report:
    def __init__(self):
        self.lines = []

    def add(self, key, value):
        self.lines.append((key, _fmt(value)))

    def render(self, timestamp=None):
        ts = timestamp or datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")
        body = "".join(f"{k}: {v}\n" for k, v in self.lines)
        return body + f"timestamp: {ts}\n"


def _tolerances(problem, args):
    tol = dict(problem.tolerances)
    if args.tol_rank is not None:
        tol["rank"] = args.tol_rank
    if args.tol_cluster is not None:
        tol["cluster"] = args.tol_cluster
    if args.margin is not None:
        tol["margin"] = args.margin
    problem.tolerances = tol
    if args.grid is not None:
        problem.n = args.grid
    return tol


def _header(report, command, args, problem, tol):
    report.add("tool", f"shiftdiag {__version__}")
    report.add("command", command)
    report.add("problem", Path(args.problem).name)
    report.add("problem_digest", problem.digest())
    report.add("grid_d", problem.d)
    report.add("grid_n", problem.n)
    report.add("window_K", problem.K)
    report.add("tol_rank", float(tol["rank"]))
    report.add("tol_cluster", None if tol["cluster"] is None else float(tol["cluster"]))
    report.add("margin", float(tol["margin"]))
    report.add("fit_degree", int(tol["fit_degree"]))


def _space_lines(report, frame, R):
    report.add("generators", frame.generators.count)
    report.add("length", frame.length)
    report.add("spectrum_measure", frame.spectrum.measure)
    report.add("op_norm", op_norm(R))
    report.add("self_adjoint", is_self_adjoint(R))
    report.add("normal", is_normal(R))


def _decision_lines(report, decision):
    report.add("verdict", "YES" if decision.verdict else "NO")
    report.add("reason", decision.reason or None)
    report.add("g", decision.g)
    report.add("beta", decision.g if decision.verdict else None)
    report.add("cb_ess_sup", decision.cb_sup)
    report.add("defect_measure", decision.defect.measure)
    for j in range(1, decision.g + 1):
        report.add(f"C_{j}_measure", decision.spectra.C(j).measure)


def _synthesis_residual(dec, R):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if is_normal(R):
            return "spectral", float(spectral_synthesis(dec, R).max(initial=0.0))
        return "oblique", float(oblique_synthesis(dec, R).max(initial=0.0))


def _omega_columns(grid):
    return [f"omega_{i + 1}" for i in range(grid.d)] if grid.d > 1 else ["omega"]


def _write_csv(path, grid, columns):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", *_omega_columns(grid), *columns])
        data = list(columns.values())
        for t in range(grid.size):
            w.writerow([t, *(format(x, ".12g") for x in grid.cells[t]),
                        *(format(float(c[t]), ".12g") for c in data)])


def _write_artifacts(out, dec, spectra, R):
    out.mkdir(parents=True, exist_ok=True)
    save_decomposition(dec, out / DECOMPOSITION_FILE)
    grid = R.grid
    for p in dec.pairs:
        _write_csv(out / f"lambda_{p.index}.csv", grid,
                   {"re": p.values.real, "im": p.values.imag,
                    "in_spectrum": p.spectrum.member.astype(int)})
    _write_csv(out / "counts.csv", grid,
               {"dim": R.dims, "k": np.where(R.dims > 0, spectra.k, 0)})


def _load_or_build(args, R, tol):
    path = Path(args.decomposition) if args.decomposition else None
    if path is None and args.out and (Path(args.out) / DECOMPOSITION_FILE).exists():
        path = Path(args.out) / DECOMPOSITION_FILE
    if path is not None:
        dec = load_decomposition(path)
        if dec.grid != R.grid:
            raise ShiftDiagError(f"stored decomposition grid {dec.grid} does not match problem")
        return dec, fiber_spectra(R, dec.cluster_tol), True, "YES"
    decision = decide_s_diagonalizable(
        R, tol["margin"], tol["cluster"], tol["rank"], int(tol["fit_degree"])
    )
    return decision.decomposition, decision.spectra, decision.verdict, decision


def cmd_analyze(args):
    problem = load_problem(args.problem)
    tol = _tolerances(problem, args)
    report = Report()
    _header(report, "analyze", args, problem, tol)
    _, frame, R = problem.build()
    _space_lines(report, frame, R)
    spectra = fiber_spectra(R, tol["cluster"])
    report.add("max_distinct", int(spectra.k.max(initial=0)))
    decision = decide_s_diagonalizable(
        R, tol["margin"], tol["cluster"], tol["rank"], int(tol["fit_degree"])
    )
    _decision_lines(report, decision)
    return report, EXIT_OK if decision.verdict else EXIT_NO


def cmd_diagonalize(args):
    problem = load_problem(args.problem)
    tol = _tolerances(problem, args)
    report = Report()
    _header(report, "diagonalize", args, problem, tol)
    _, frame, R = problem.build()
    _space_lines(report, frame, R)
    decision = decide_s_diagonalizable(
        R, tol["margin"], tol["cluster"], tol["rank"], int(tol["fit_degree"])
    )
    _decision_lines(report, decision)
    if not decision.verdict:
        return report, EXIT_NO
    dec = decision.decomposition
    kind, resid = _synthesis_residual(dec, R)
    report.add("synthesis", kind)
    report.add("synthesis_residual", resid)
    for p in dec.pairs:
        report.add(f"symbol_{p.index}_fit_residual", p.symbol.fit_residual)
    if args.out:
        _write_artifacts(Path(args.out), dec, decision.spectra, R)
        report.add("artifact", DECOMPOSITION_FILE)
    return report, EXIT_OK


def cmd_verify(args):
    problem = load_problem(args.problem)
    tol = _tolerances(problem, args)
    report = Report()
    _header(report, "verify", args, problem, tol)
    _, frame, R = problem.build()
    dec, spectra, verdict, decision = _load_or_build(args, R, tol)
    if not verdict:
        _decision_lines(report, decision)
        return report, EXIT_NO
    report.add("pairs", dec.m)
    checks = check_decomposition(dec, R, spectra)
    for name, ok in checks.items():
        report.add(f"check_{name}", ok)
    rng = np.random.default_rng(0)
    worst = 0.0
    action_ok = True
    for j, p in enumerate(dec.pairs, start=1):
        allowed = max(1e-8, 10 * p.symbol.fit_residual)
        for _ in range(VERIFY_SAMPLES):
            f = synthesize_in_eigenspace(dec, R, j, rng)
            lhs = apply_operator(R, f)
            rhs = fold(apply_lambda(p.symbol, f), R.grid)
            rel = np.linalg.norm(lhs.values - rhs.values) / max(f.norm(), 1e-300)
            worst = max(worst, rel)
            action_ok &= rel <= allowed
    report.add("eigen_action_max_relative", worst)
    report.add("check_eigen_action", bool(action_ok))
    ok = all(checks.values()) and action_ok
    report.add("result", "PASS" if ok else "FAIL")
    return report, EXIT_OK if ok else EXIT_ERROR


def cmd_synthesize(args):
    problem = load_problem(args.problem)
    tol = _tolerances(problem, args)
    report = Report()
    _header(report, "synthesize", args, problem, tol)
    _, frame, R = problem.build()
    dec, _, verdict, decision = _load_or_build(args, R, tol)
    if not verdict:
        _decision_lines(report, decision)
        return report, EXIT_NO
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        oblique = oblique_synthesis(dec, R)
    report.add("oblique_residual_max", float(oblique.max(initial=0.0)))
    if is_normal(R):
        report.add("spectral_residual_max", float(spectral_synthesis(dec, R).max(initial=0.0)))
    else:
        report.add("spectral_residual_max", None)
    report.add("residual_bound", 1e-8 * (dec.bound or 1.0))
    return report, EXIT_OK


COMMANDS = {
    "analyze": cmd_analyze,
    "diagonalize": cmd_diagonalize,
    "verify": cmd_verify,
    "synthesize": cmd_synthesize,
}


def build_parser():
    parser = argparse.ArgumentParser(prog="shiftdiag", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"shiftdiag {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("problem", help="problem file, or the name of a bundled problem")
        p.add_argument("--grid", type=int, help="cells per dimension (overrides the file)")
        p.add_argument("--margin", type=float, help="angle margin: YES needs ess sup C_b <= 1 - margin")
        p.add_argument("--tol-rank", type=float, help="relative singular-value cutoff")
        p.add_argument("--tol-cluster", type=float, help="eigenvalue clustering distance")
        p.add_argument("--out", help="directory for decomposition and CSV artifacts")
        if name in ("verify", "synthesize"):
            p.add_argument("--decomposition", help="stored decomposition.npz to check")
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        report, status = COMMANDS[args.command](args)
    except (ShiftDiagError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    sys.stdout.write(report.render())
    return status


if __name__ == "__main__":
    sys.exit(main())
