"""Command-line entry point: ``run``, ``sweep`` and ``slope``."""
from __future__ import annotations

import argparse
import configparser
import json
import sys
from dataclasses import asdict, replace
from pathlib import Path

from .bench import (SweepSpec, config_from_parser, emit, fit_slope, load_sweep_spec,
                    problem_options, read_rows, run_sweep, parse_floats, parse_ini)
from .driver import ConfigError, run, write_trace

EXIT_OK, EXIT_CONFIG, EXIT_INNER = 0, 2, 3


def _cmd_run(args) -> int:
    parser = parse_ini(Path(args.config).read_text()) if args.config else configparser.ConfigParser()
    config = config_from_parser(parser)
    opts = problem_options(parser)
    if args.problem:
        opts["problem"] = args.problem
    if args.dim is not None:
        opts["dim"] = args.dim
    if args.x0:
        opts["x0"] = parse_floats(args.x0)
    if args.epsilon is not None:
        config = replace(config, epsilon=args.epsilon)
    config = replace(config, seed=args.seed)
    try:
        spec = SweepSpec(**opts, config=config)
        problem = spec.make_problem()
        x0 = spec.start_point(problem, args.seed)
        result = run(problem, x0, config)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    if args.trace_out:
        write_trace(result.trace, args.trace_out)
    summary = {
        "problem": spec.problem, "dim": problem.dim, "seed": args.seed,
        "termination": result.termination, "n_epsilon": result.n_epsilon,
        "iterations": len(result.trace), "deriv_evals": result.deriv_evals,
        "f_evals": result.f_evals, "final_f": problem.value(result.final_point),
        "final_point": result.final_point.tolist(),
        "counts": asdict(result.counts) if result.counts else None,
    }
    print(json.dumps(summary, indent=1))
    return EXIT_INNER if result.termination == "inner_failure" else EXIT_OK


def _cmd_sweep(args) -> int:
    spec = load_sweep_spec(args.spec)
    rows = run_sweep(spec, workers=args.workers)
    emit(rows, args.out, args.format)
    return EXIT_OK


def _cmd_slope(args) -> int:
    fit = fit_slope(read_rows(args.inp))
    print(json.dumps(asdict(fit)))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="iarqp", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="single run; prints a JSON summary")
    r.add_argument("--problem", help="builtin problem name (overrides the config file)")
    r.add_argument("--config", help="INI file with [algorithm], [noise], [problem] sections")
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--dim", type=int)
    r.add_argument("--x0", help="comma-separated start point (default: random ball point)")
    r.add_argument("--epsilon", type=float, help="tolerance applied to every order")
    r.add_argument("--trace-out", help="write the iteration trace as JSON lines")
    r.set_defaults(func=_cmd_run)

    s = sub.add_parser("sweep", help="epsilon x seed sweep")
    s.add_argument("--spec", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--workers", type=int, default=1)
    s.set_defaults(func=_cmd_sweep)

    sl = sub.add_parser("slope", help="fit log(mean_N) against log(1/epsilon)")
    sl.add_argument("--in", dest="inp", required=True)
    sl.set_defaults(func=_cmd_slope)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, configparser.Error) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
