"""Command-line entry point: ``bounds``, ``solve``, ``sweep`` and ``count-beliefs``."""

from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from . import bench
from .beliefs import count_two_step_beliefs, enumerate_one_step_beliefs
from .bounds import BOUND_KINDS
from .pomdp_file import PomdpParseError

EXIT_OK, EXIT_USAGE, EXIT_PARSE, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _kinds(text: str) -> list[str]:
    kinds = [k.strip().lower() for k in text.split(",") if k.strip()]
    bad = [k for k in kinds if k not in BOUND_KINDS]
    if bad or not kinds:
        raise argparse.ArgumentTypeError(f"bounds must be drawn from {','.join(BOUND_KINDS)}")
    return kinds


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _add_model(p):
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--env", help="builtin: guessing_game, tiger, grid, k_out_of_n(N)")
    src.add_argument("--file", help="path to a .pomdp file")
    p.add_argument("--gamma", type=float, default=None, help="override the discount factor")


def _add_output(p):
    p.add_argument("--out", choices=["csv", "md", "markdown"], default="csv")
    p.add_argument("--output", help="write the table here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pomdp-bounds", description="Informed POMDP upper bounds and a point-based solver.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("bounds", help="compute upper bounds at the initial belief")
    _add_model(p)
    p.add_argument("--bound", type=_kinds, default=list(BOUND_KINDS), help="comma-separated bound kinds")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--max-iter", type=int, default=250)
    p.add_argument("--no-bao", action="store_true", help="skip counting two-step beliefs")
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock columns")
    _add_output(p)

    p = sub.add_parser("solve", help="run the point-based solver")
    _add_model(p)
    p.add_argument("--init", type=_kinds, default=["fib"], help="initial upper bound(s)")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--budgets", type=_floats, default=None, help="report bounds at these times")
    p.add_argument("--long-budgets", action="store_true", help="use 600,1200,3600 s budgets")
    p.add_argument("--trace", help="write (init, seconds, lower, upper) checkpoints as CSV")
    _add_output(p)

    p = sub.add_parser("sweep", help="solver time against the discount factor")
    _add_model(p)
    p.add_argument("--gammas", type=_floats, default=[0.9, 0.95, 0.99])
    p.add_argument("--init", type=_kinds, default=["fib", "tib"])
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--timeout", type=float, default=60.0)
    _add_output(p)

    p = sub.add_parser("count-beliefs", help="point-set sizes")
    _add_model(p)
    return parser


def _emit(text: str, path: Optional[str]):
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _source(args) -> str:
    return args.file if args.file else args.env


def _check_range(args):
    if args.gamma is not None and not 0 < args.gamma < 1:
        raise UsageError("--gamma must lie in (0, 1)")
    for name in ("eps", "timeout"):
        if getattr(args, name, 1.0) <= 0:
            raise UsageError(f"--{name} must be positive")
    if args.file and not Path(args.file).exists():
        raise UsageError(f"no such file: {args.file}")


def _run(args) -> int:
    _check_range(args)
    source = _source(args)
    # resolve once up front so unknown names and malformed files map to their exit codes
    bench.resolve_model(source, args.gamma)
    fmt = "csv" if args.command == "count-beliefs" else ("csv" if args.out == "csv" else "markdown")
    if args.command == "bounds":
        spec = bench.ExperimentSpec(models=[source], bounds=args.bound, gamma=args.gamma, epsilon=args.eps,
                                    max_iter=args.max_iter, output=fmt, count_bao=not args.no_bao,
                                    include_timings=not args.no_timings)
        rows = bench.run_bounds(spec)
        _model_errors(rows)
        _emit(bench.render(rows, spec), args.output)
    elif args.command == "solve":
        budgets = bench.LONG_BUDGETS if args.long_budgets else (args.budgets or [args.timeout])
        spec = bench.ExperimentSpec(models=[source], bounds=args.init, gamma=args.gamma, budgets=budgets,
                                    solver_epsilon=args.eps, output=fmt, count_bao=False)
        traces = []
        rows = bench.run_solver_comparison(spec, traces)
        _model_errors(rows)
        if args.trace:
            with open(args.trace, "w", newline="") as fh:
                w = csv.writer(fh, lineterminator="\n")
                w.writerow(["env", "init", "seconds", "lower", "upper"])
                w.writerows([(e, k, repr(t), repr(lo), repr(up)) for e, k, t, lo, up in traces])
        _emit(bench.render(rows, spec), args.output)
    elif args.command == "sweep":
        spec = bench.ExperimentSpec(models=[source], bounds=args.init, gammas=args.gammas, budgets=[args.timeout],
                                    solver_epsilon=args.eps, output=fmt, count_bao=False)
        rows = bench.run_discount_sweep(spec)
        _model_errors(rows)
        _emit(bench.render(rows, spec), args.output)
    else:
        model = bench.resolve_model(source, args.gamma)
        ps = enumerate_one_step_beliefs(model)
        sys.stdout.write("env,n_states,n_actions,n_observations,n_b_sao,n_b_bao\n")
        sys.stdout.write(f"{source},{model.num_states},{model.num_actions},{model.num_observations},"
                         f"{len(ps)},{count_two_step_beliefs(model, ps)}\n")
    return EXIT_OK


def _model_errors(rows):
    # a model that failed to load surfaces as a parse error rather than a partial table
    for row in rows:
        if row.error.startswith("PomdpParseError"):
            raise PomdpParseError(row.error.split(": ", 1)[1])


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        return _run(args)
    except UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except KeyError as exc:
        sys.stderr.write(f"usage error: {exc.args[0] if exc.args else exc}\n")
        return EXIT_USAGE
    except PomdpParseError as exc:
        sys.stderr.write(f"parse error: {exc}\n")
        return EXIT_PARSE
    except Exception as exc:
        logging.getLogger(__name__).debug("internal failure", exc_info=True)
        sys.stderr.write(f"internal error: {type(exc).__name__}: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    raise SystemExit(main())
