"""Command line interface.

Subcommands:
    run <config>                        run an experiment config
    verify                              run the built-in property suite
    fit --field NAME --kmin A --kmax B <trace...>   log-log slope fit
    plot --out PATH [--field NAME ...] <trace...>   wide-CSV plot data

Exit codes: 0 success, 1 configuration error, 2 numeric failure,
3 data error.
"""

from __future__ import annotations

import argparse
import sys

from ..errors import (EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC, EXIT_OK,
                      ConfigError, DataError, InvalidArgumentError,
                      NumericFailure, ParseError, PreconditionViolation)
from .analysis import emit_plot_data, fit_rate
from .config import load_config
from .runner import run_experiment
from .trace import read_trace
from .verify import run_verification


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="fosbo",
        description="Fully first-order stochastic bilevel optimization runs")
    sub = p.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run an experiment from a config file")
    run_p.add_argument("config", help="path to a JSON experiment config")

    sub.add_parser("verify", help="run the reference property suite")

    fit_p = sub.add_parser("fit", help="fit a log-log rate slope over traces")
    fit_p.add_argument("--field", required=True,
                       help="trace column to fit, e.g. grad_F_norm_sq")
    fit_p.add_argument("--kmin", type=float, required=True)
    fit_p.add_argument("--kmax", type=float, required=True)
    fit_p.add_argument("traces", nargs="+", help="trace CSV files")

    plot_p = sub.add_parser("plot", help="emit wide-format plot data")
    plot_p.add_argument("--out", required=True, help="output CSV path")
    plot_p.add_argument("--field", action="append", default=None,
                        help="column(s) to aggregate; default grad_F_norm_sq")
    plot_p.add_argument("traces", nargs="+", help="trace CSV files")
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    summary = run_experiment(cfg)
    ok = summary["n_seeds"] - summary["n_failed"]
    print(f"{summary['algorithm']} on {summary['problem'].get('kind')}: "
          f"{ok}/{summary['n_seeds']} seeds finished, "
          f"summary in {cfg.out_dir}/summary.json")
    if summary["n_failed"] == summary["n_seeds"]:
        print("all seeds failed", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK


def _cmd_fit(args) -> int:
    traces = [read_trace(p) for p in args.traces]
    slope, intercept, r2 = fit_rate(traces, args.kmin, args.kmax, args.field)
    print(f"slope={slope:.6f} intercept={intercept:.6f} r2={r2:.6f} "
          f"({len(traces)} trace(s), field {args.field})")
    return EXIT_OK


def _cmd_plot(args) -> int:
    traces = [read_trace(p) for p in args.traces]
    fields = args.field if args.field else ["grad_F_norm_sq"]
    emit_plot_data(traces, fields, args.out)
    print(f"wrote {args.out}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify":
            return EXIT_OK if run_verification() == 0 else EXIT_NUMERIC
        if args.command == "fit":
            return _cmd_fit(args)
        return _cmd_plot(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (InvalidArgumentError, PreconditionViolation) as exc:
        print(f"invalid arguments: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericFailure as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, ParseError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
