"""``mimo-lab`` command line: run, validate and report."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import os
import sys
from typing import Optional, Sequence

from .config import ConfigError, load_scenario
from .csvio import SchemaError, emit_csv, parse_csv
from .report import format_report
from .sweep import CellFilter, run_sweep

EXIT_OK, EXIT_CONFIG, EXIT_PARTIAL, EXIT_IO = 0, 1, 2, 3
LOG_LEVELS = {"error": logging.ERROR, "info": logging.INFO, "debug": logging.DEBUG}

log = logging.getLogger("mimo_lab")


def _setup_logging() -> None:
    name = os.environ.get("MIMO_LAB_LOG", "info").strip().lower()
    level = LOG_LEVELS.get(name)
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(levelname)s %(message)s"))
    log.handlers[:] = [handler]
    log.propagate = False
    log.setLevel(level if level is not None else logging.INFO)
    if level is None:
        log.warning("MIMO_LAB_LOG=%r not recognized, using info", name)


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mimo-lab", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="evaluate a scenario and write a result CSV")
    run.add_argument("--config", required=True)
    run.add_argument("--output", required=True)
    run.add_argument("--seed", type=int, help="override seeds.master")
    run.add_argument("--threads", type=int, default=1, help="worker pool width")
    run.add_argument("--cells", help="cell filter, e.g. 'precoder=ZF|ZF-PGP,snr=5,seed=0'")
    run.add_argument("--timing", action="store_true",
                     help="record per-cell runtime (output is then not reproducible)")
    val = sub.add_parser("validate", help="check a scenario file and print resolved settings")
    val.add_argument("--config", required=True)
    rep = sub.add_parser("report", help="per-series medians and gains over ZF")
    rep.add_argument("--input", required=True)
    return p


def _load(path: str):
    try:
        return load_scenario(path), EXIT_OK
    except ConfigError as exc:
        print(f"{path}: {exc}", file=sys.stderr)
        return None, EXIT_CONFIG
    except OSError as exc:
        print(f"{path}: {exc.strerror or exc}", file=sys.stderr)
        return None, EXIT_IO


def _run(args) -> int:
    cfg, code = _load(args.config)
    if cfg is None:
        return code
    if args.seed is not None:
        if args.seed < 0:
            print("--seed must be nonnegative", file=sys.stderr)
            return EXIT_CONFIG
        cfg = dataclasses.replace(cfg, master_seed=args.seed)
    if args.threads < 1:
        print("--threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    try:
        selection = CellFilter(args.cells)
    except ValueError as exc:
        print(f"--cells: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for line in cfg.describe().splitlines():
        log.info("config %s", line)
    rows = run_sweep(cfg, args.threads, selection, args.timing)
    try:
        emit_csv(rows, args.output)
    except OSError as exc:
        print(f"{args.output}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    failed = sum(not r.ok for r in rows)
    if failed:
        print(f"{failed} of {len(rows)} rows failed", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _validate(args) -> int:
    cfg, code = _load(args.config)
    if cfg is None:
        return code
    print(cfg.describe())
    return EXIT_OK


def _report(args) -> int:
    try:
        rows = parse_csv(args.input)
    except OSError as exc:
        print(f"{args.input}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except (SchemaError, ValueError) as exc:
        print(f"{args.input}: {exc}", file=sys.stderr)
        return EXIT_IO
    print(format_report(rows))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = _parser().parse_args(argv)
    _setup_logging()
    handler = {"run": _run, "validate": _validate, "report": _report}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
