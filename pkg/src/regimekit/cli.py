"""Command-line entry point.

``regimekit run --config cfg.ini`` runs every stage; ``regimekit <stage>``
runs one stage against the outputs already in the output directory, and
``regimekit report`` consolidates them into tables.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 stage failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import __version__
from .config import load_config
from .exceptions import (
    ConfigError,
    DataError,
    MissingInputError,
    MissingStageOutputError,
    StageFailure,
)
from .pipeline import STAGES, RunManifest, export_reports, run_pipeline

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_STAGE = 0, 2, 3, 4

log = logging.getLogger("regimekit")


def _split(values) -> list[str]:
    out = []
    for v in values or ():
        out += [s.strip() for s in v.split(",") if s.strip()]
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", required=True, type=Path, help="pipeline INI file")
    common.add_argument("--tickers", action="append",
                        help="comma-separated subset of configured tickers (repeatable)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")

    p = argparse.ArgumentParser(prog="regimekit", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    run = sub.add_parser("run", parents=[common], help="run all stages, or those named by --stage")
    run.add_argument("--stage", action="append", metavar="NAME",
                     help=f"stage(s) to run, comma-separated or repeated; one of {', '.join(STAGES)}")
    rep = sub.add_parser("report", parents=[common], help="write consolidated report tables")
    rep.add_argument("--format", choices=("csv", "json"), action="append",
                     help="report format (repeatable; default csv)")
    return p


def _config(args):
    cfg = load_config(args.config)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    tickers = _split(args.tickers)
    if tickers:
        cfg = cfg.select(tickers)
    return cfg


def _dispatch(args) -> int:
    cfg = _config(args)
    if args.command == "report":
        manifest = RunManifest.load(cfg.output_dir)
        for fmt in args.format or ["csv"]:
            for rel, digest in export_reports(manifest, fmt).items():
                print(f"{digest}  {rel}")
        return EXIT_OK
    stages = [args.command] if args.command in STAGES else None
    if args.command == "run" and args.stage:
        stages = _split(args.stage)
    manifest = run_pipeline(cfg, stages)
    for stage in manifest.stages:
        if stage in manifest.timings:
            log.info("%s: %.2fs", stage, manifest.timings[stage])
    for key, msgs in manifest.warnings.items():
        for m in msgs:
            print(f"warning [{key}] {m}", file=sys.stderr)
    print(cfg.output_dir / "manifest.json")
    return EXIT_OK


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (MissingInputError, DataError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except StageFailure as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA if isinstance(exc.cause, DataError) else EXIT_STAGE
    except MissingStageOutputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE


if __name__ == "__main__":
    sys.exit(main())
