"""Command-line front end.

Exit codes: 0 success, 1 runtime failure (including a failed equivalence
check), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from decimal import Decimal, InvalidOperation
from typing import Sequence

from . import __version__
from .harness import EnsembleSpec, SpecError, estimate_phase_diagram, sample_problem, trial_stream
from .persist import export_csv, read_instance, write_instance
from .solvers import SOLVERS, SolverError, relative_error, solve
from .special import BracketError, ConvergenceError, DomainError
from .thresholds import (
    EQUIVALENCE_THRESHOLD,
    CurveError,
    Method,
    ThresholdCurve,
    compute_curve,
    threshold,
    verify_equivalence,
)

EXIT_OK, EXIT_FAILURE, EXIT_USAGE = 0, 1, 2
DEFAULT_GRID = "0.05:0.95:0.05"
METHOD_CHOICES = ("geom", "fund", "amp", "all")


class UsageError(Exception):
    pass


def _decimal(text: str) -> Decimal:
    try:
        d = Decimal(text.strip())
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a number: {text!r}") from None
    if not d.is_finite():
        raise argparse.ArgumentTypeError(f"not a finite number: {text!r}")
    return d


def parse_grid(text: str) -> list[float]:
    """Parse ``start:stop:step`` (stop inclusive) or a comma-separated list.

    Decimal arithmetic keeps grid points exact, e.g. 0.1:0.3:0.1 gives
    three points. An empty string yields an empty grid.
    """
    text = text.strip()
    if not text:
        return []
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid must be start:stop:step, got {text!r}")
        start, stop, step = (_decimal(p) for p in parts)
        if step <= 0:
            raise argparse.ArgumentTypeError("grid step must be positive")
        count = int((stop - start) / step) + 1 if stop >= start else 0
        return [float(start + i * step) for i in range(max(count, 0))]
    return [float(_decimal(p)) for p in text.split(",") if p.strip()]


def _grid_arg(text: str) -> list[float]:
    return parse_grid(text)


def _alpha_arg(text: str) -> float:
    a = float(_decimal(text))
    if not 0.0 < a <= 1.0:
        raise argparse.ArgumentTypeError(f"alpha must be in (0, 1], got {text}")
    return a


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _nonneg_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 0:
        raise argparse.ArgumentTypeError(f"must be >= 0, got {v}")
    return v


def _seed_arg(text: str) -> int:
    v = _nonneg_int(text)
    if v >= 2**64:
        raise argparse.ArgumentTypeError("seed must fit in 64 bits")
    return v


def _positive_float(text: str) -> float:
    v = float(_decimal(text))
    if not v > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return v


def _methods(choice: str) -> list[Method]:
    if choice == "all":
        return [Method.GEOMETRIC, Method.FUNDAMENTAL, Method.AMP]
    return [Method.parse(choice)]


def _repro_line(argv: Sequence[str]) -> str:
    return f"weakthresh {__version__} " + " ".join(argv)


def _drop_flag(argv: Sequence[str], flag: str) -> list[str]:
    out, skip = [], False
    for a in argv:
        if skip:
            skip = False
        elif a == flag:
            skip = True
        elif not a.startswith(flag + "="):
            out.append(a)
    return out


def _open_out(path: str):
    try:
        return open(path, "w", newline="", encoding="utf-8")
    except OSError as exc:
        raise RuntimeError(f"cannot write {path}: {exc.strerror or exc}") from None


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_threshold(args, argv) -> int:
    curves = []
    for m in _methods(args.method):
        curves.append(ThresholdCurve(m, [threshold(m, args.alpha)]))
    export_csv(curves, sys.stdout)
    return EXIT_OK


def cmd_curve(args, argv) -> int:
    if not args.grid:
        raise UsageError("empty grid")
    curves = [compute_curve(m, args.grid) for m in _methods(args.method)]
    comments = [_repro_line(_drop_flag(argv, "--out"))]
    if args.out:
        with _open_out(args.out) as fh:
            export_csv(curves, fh, comments)
    else:
        export_csv(curves, sys.stdout, comments)
    return EXIT_OK


def cmd_equivalence(args, argv) -> int:
    if not args.grid:
        raise UsageError("empty grid")
    report = verify_equivalence(args.grid, threshold_=args.tol)
    for line in report.lines():
        print(line)
    return EXIT_OK if report.passed else EXIT_FAILURE


def cmd_gen(args, argv) -> int:
    if args.m > args.n:
        raise UsageError(f"--m {args.m} exceeds --n {args.n}")
    if args.k > args.m:
        raise UsageError(f"--k {args.k} exceeds --m {args.m}")
    rng = trial_stream(args.seed, args.m / args.n, args.k / args.n, 0)
    inst = sample_problem(args.n, args.m, args.k, rng, args.nonzero_law)
    inst.seed = args.seed
    if args.out:
        with _open_out(args.out) as fh:
            write_instance(inst, fh)
    else:
        write_instance(inst, sys.stdout)
    return EXIT_OK


def cmd_solve(args, argv) -> int:
    try:
        inst = read_instance(args.instance)
    except OSError as exc:
        raise RuntimeError(f"cannot read {args.instance}: {exc.strerror or exc}") from None
    out = solve(args.solver, inst)
    print(f"solver={out.solver}")
    print(f"converged={str(out.converged).lower()}")
    print(f"iterations={out.iterations}")
    print(f"residual_norm={out.residual_norm:.17g}")
    if inst.truth is not None:
        print(f"rel_error={relative_error(out.estimate, inst.truth):.17g}")
    if out.certified_optimal is not None:
        print(f"certified_optimal={str(out.certified_optimal).lower()}")
    return EXIT_OK


def cmd_phase(args, argv) -> int:
    if not args.alpha_grid:
        raise UsageError("empty --alpha-grid")
    for a in args.alpha_grid:
        if not 0.0 < a <= 1.0:
            raise UsageError(f"alpha {a} outside (0, 1]")
    for b in args.beta_grid:
        if b < 0:
            raise UsageError(f"beta {b} is negative")
    try:
        template = EnsembleSpec(args.n, args.alpha_grid[0], 0.0, args.nonzero_law, args.seed)
    except SpecError as exc:
        raise UsageError(str(exc)) from None
    diagram = estimate_phase_diagram(
        args.alpha_grid, args.beta_grid, template, args.solver, args.trials,
        relative=args.relative, workers=args.workers,
    )
    # worker count and output path do not affect results, so they stay out of the header
    comments = [_repro_line(_drop_flag(_drop_flag(argv, "--workers"), "--out"))]
    if args.out:
        with _open_out(args.out) as fh:
            export_csv(diagram, fh, comments)
    else:
        export_csv(diagram, sys.stdout, comments)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def __init__(self, *a, **kw):
        kw.setdefault("allow_abbrev", False)
        super().__init__(*a, **kw)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="weakthresh", description="Weak threshold curves and sparse recovery experiments.")
    p.add_argument("--version", action="version", version=f"weakthresh {__version__}")
    p.add_argument("--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("threshold", help="beta_w at one alpha", description="Print beta_w(alpha) as curve CSV rows.")
    s.add_argument("--alpha", type=_alpha_arg, required=True, help="undersampling ratio m/n in (0, 1]")
    s.add_argument("--method", choices=METHOD_CHOICES, default="all")
    s.set_defaults(func=cmd_threshold)

    s = sub.add_parser("curve", help="beta_w over an alpha grid", description="Compute the threshold curve on a grid.")
    s.add_argument("--grid", type=_grid_arg, default=parse_grid(DEFAULT_GRID),
                   help=f"start:stop:step (inclusive) or comma list, default {DEFAULT_GRID}")
    s.add_argument("--method", choices=METHOD_CHOICES, default="fund")
    s.add_argument("--out", help="output CSV file (default stdout)")
    s.set_defaults(func=cmd_curve)

    s = sub.add_parser("equivalence", help="check the three routes agree",
                       description="Exit 0 if all methods agree within --tol on the grid, 1 otherwise.")
    s.add_argument("--grid", type=_grid_arg, default=parse_grid(DEFAULT_GRID),
                   help=f"start:stop:step (inclusive) or comma list, default {DEFAULT_GRID}")
    s.add_argument("--tol", type=_positive_float, default=EQUIVALENCE_THRESHOLD,
                   help="maximum allowed pairwise difference in beta_w")
    s.set_defaults(func=cmd_equivalence)

    s = sub.add_parser("gen", help="write a random instance", description="Sample a Gaussian instance as JSON.")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--m", type=_positive_int, required=True)
    s.add_argument("--k", type=_nonneg_int, required=True)
    s.add_argument("--seed", type=_seed_arg, default=0)
    s.add_argument("--nonzero-law", choices=("normal", "rademacher"), default="normal")
    s.add_argument("--out", help="output JSON file (default stdout)")
    s.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="solve an instance file", description="Run a solver on an instance JSON file.")
    s.add_argument("--instance", required=True)
    s.add_argument("--solver", choices=sorted(SOLVERS), default="bp")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("phase", help="Monte Carlo phase diagram", description="Success counts over an alpha x beta grid.")
    s.add_argument("--n", type=_positive_int, required=True)
    s.add_argument("--alpha-grid", type=_grid_arg, required=True)
    s.add_argument("--beta-grid", type=_grid_arg, required=True)
    s.add_argument("--relative", action="store_true", help="beta values are multiples of beta_w(alpha)")
    s.add_argument("--trials", type=_positive_int, default=20)
    s.add_argument("--solver", choices=sorted(SOLVERS), default="bp")
    s.add_argument("--seed", type=_seed_arg, default=0)
    s.add_argument("--nonzero-law", choices=("normal", "rademacher"), default="normal")
    s.add_argument("--workers", type=_positive_int, default=1, help="worker processes (results do not depend on it)")
    s.add_argument("--out", help="output CSV file (default stdout)")
    s.set_defaults(func=cmd_phase)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(message)s")
    try:
        return args.func(args, argv)
    except UsageError as exc:
        print(f"weakthresh {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (RuntimeError, ValueError, SolverError, CurveError, DomainError, BracketError, ConvergenceError) as exc:
        print(f"weakthresh {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
