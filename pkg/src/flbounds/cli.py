"""Command-line entry point.

Subcommands:
    run     simulate one experiment and write report files
    sweep   repeat an experiment across K or n values
    bounds  recompute bounds from a stored report.json (no retraining)
    report  render a metrics.csv as a table on stdout

Exit status: 0 success, 1 validation/usage error, 2 runtime error.
The FLBOUNDS_OUTPUT_DIR environment variable supplies the default
output directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from dataclasses import replace

from .errors import DomainError, FormatError, ParameterError, StructuralError
from .harness import (
    load_config,
    recompute_bounds_from_report,
    run_experiment,
    run_sweep,
    write_report,
    write_sweep_report,
)

_VALIDATION_ERRORS = (ParameterError, StructuralError, DomainError, FormatError, FileNotFoundError)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors; the contract here is exit 1
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    parser = _Parser(prog="flbounds", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run one experiment")
    run_p.add_argument("--config", required=True, help="JSON experiment config")
    run_p.add_argument("--seed", type=int, help="override the master seed")
    run_p.add_argument("--out", help="output directory")
    run_p.add_argument("--workers", type=int, help="outer-draw worker count")

    sweep_p = sub.add_parser("sweep", help="run one experiment per axis value")
    sweep_p.add_argument("--config", required=True)
    sweep_p.add_argument("--axis", required=True, choices=("n", "K"))
    sweep_p.add_argument("--values", required=True, help="comma-separated ascending ints")
    sweep_p.add_argument("--seed", type=int)
    sweep_p.add_argument("--out")
    sweep_p.add_argument("--workers", type=int)

    bounds_p = sub.add_parser("bounds", help="recompute bounds from a stored report")
    bounds_p.add_argument("--from", dest="source", required=True, help="path to report.json")
    bounds_p.add_argument("--sigma", type=float, help="override the sub-Gaussian proxy")
    bounds_p.add_argument("--sigma-part", type=float)
    bounds_p.add_argument("--sigma-oos", type=float)
    bounds_p.add_argument("--out")

    report_p = sub.add_parser("report", help="print a metrics.csv as a table")
    report_p.add_argument("--from", dest="source", required=True, help="path to metrics.csv")
    return parser


def _resolve_out(arg_out, cfg_out) -> str:
    if arg_out:
        return arg_out
    env = os.environ.get("FLBOUNDS_OUTPUT_DIR")
    if env:
        return env
    return cfg_out


def _load_overridden_config(args):
    cfg = load_config(args.config)
    updates = {}
    if args.seed is not None:
        updates["seed"] = args.seed
    if args.workers is not None:
        updates["workers"] = args.workers
    if updates:
        cfg = replace(cfg, **updates)
    return cfg


def _cmd_run(args) -> int:
    cfg = _load_overridden_config(args)
    report = run_experiment(cfg)
    paths = write_report(report, _resolve_out(args.out, cfg.output_dir))
    print(f"wrote {paths['report.json']} and {paths['metrics.csv']}")
    return 0


def _cmd_sweep(args) -> int:
    cfg = _load_overridden_config(args)
    try:
        values = [int(v) for v in args.values.split(",") if v.strip()]
    except ValueError as exc:
        raise ParameterError(f"--values must be comma-separated ints: {exc}") from exc
    results = run_sweep(cfg, args.axis, values)
    paths = write_sweep_report(args.axis, results, _resolve_out(args.out, cfg.output_dir))
    print(f"wrote {paths['report.json']} and {paths['metrics.csv']}")
    return 0


def _cmd_bounds(args) -> int:
    with open(args.source, "r", encoding="utf-8") as f:
        try:
            payload = json.load(f)
        except json.JSONDecodeError as exc:
            raise ParameterError(f"{args.source} is not valid JSON: {exc}") from exc
    out_dir = _resolve_out(args.out, os.path.dirname(os.path.abspath(args.source)) or ".")
    kwargs = {"sigma": args.sigma, "sigma_part": args.sigma_part, "sigma_oos": args.sigma_oos}
    if isinstance(payload, list):  # sweep report
        redone = [
            (entry["axis_value"], recompute_bounds_from_report(entry["report"], **kwargs))
            for entry in payload
        ]
        axis = payload[0]["axis"] if payload else "none"
        paths = write_sweep_report(axis, redone, out_dir)
    else:
        paths = write_report(recompute_bounds_from_report(payload, **kwargs), out_dir)
    print(f"wrote {paths['report.json']} and {paths['metrics.csv']}")
    return 0


def _cmd_report(args) -> int:
    with open(args.source, "r", encoding="utf-8", newline="") as f:
        rows = list(csv.reader(f))
    if not rows:
        raise ParameterError(f"{args.source} is empty")
    header, body = rows[0], rows[1:]
    show = ["experiment_id", "axis", "axis_value", "emp_risk", "gap_est", "bound_name", "bound_value"]
    idx = []
    for col in show:
        if col not in header:
            raise FormatError(f"{args.source} lacks required column {col!r}")
        idx.append(header.index(col))
    table = [show] + [[row[i] for i in idx] for row in body]
    widths = [max(len(r[c]) for r in table) for c in range(len(show))]
    for r, row in enumerate(table):
        print("  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip())
        if r == 0:
            print("  ".join("-" * w for w in widths))
    return 0


_COMMANDS = {"run": _cmd_run, "sweep": _cmd_sweep, "bounds": _cmd_bounds, "report": _cmd_report}


def dispatch(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except _VALIDATION_ERRORS as exc:
        print(f"flbounds: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - runtime failures map to exit 2
        print(f"flbounds: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


def main():
    raise SystemExit(dispatch())


if __name__ == "__main__":
    main()
