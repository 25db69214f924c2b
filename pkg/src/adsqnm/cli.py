"""Command-line front end.

Subcommands: ``run``, ``validate``, ``export`` and ``plot``.  Exit codes:
0 on success, 1 when a stage fails (or an export/plot input is missing),
2 when the configuration is invalid.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigInvalid, MissingStageOutput, StageFailure
from .pipeline import export, load_config, plot, resolve_output_dir, run
from .plotting import PLOT_KINDS

__all__ = ["main", "build_parser"]

EXIT_OK, EXIT_STAGE, EXIT_CONFIG = 0, 1, 2


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adsqnm", description="Kerr-AdS quasinormal mode toolkit")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="execute the stages of a configuration")
    p.add_argument("config")
    p.add_argument("--out", help="output directory (overrides ADSQNM_OUT and the config)")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--no-figures", action="store_true", help="skip the SVG report")
    p.add_argument("-v", "--verbose", action="count", default=0)

    p = sub.add_parser("validate", help="check a configuration without running it")
    p.add_argument("config")

    p = sub.add_parser("export", help="export the tables of a finished run")
    p.add_argument("manifest")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out")

    p = sub.add_parser("plot", help="render an SVG figure from a finished run")
    p.add_argument("manifest")
    p.add_argument("--kind", choices=PLOT_KINDS, required=True)
    p.add_argument("--out")
    return ap


def _setup_logging(verbosity: int) -> None:
    level = logging.WARNING - 10 * min(verbosity, 2)
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s",
                        stream=sys.stderr)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging(getattr(args, "verbose", 0))
    try:
        if args.command == "validate":
            cfg = load_config(args.config)
            print(json.dumps({"valid": True, "config_hash": cfg.config_hash,
                              "stages": list(cfg.stages)}))
            return EXIT_OK
        if args.command == "run":
            cfg = load_config(args.config)
            out = resolve_output_dir(cfg, args.out)
            man = run(cfg, out, workers=args.workers, figures=not args.no_figures)
            print(out / "manifest.json")
            return EXIT_OK if man.status in ("success", "partial") else EXIT_STAGE
        if args.command == "export":
            for path in export(args.manifest, args.format, args.out):
                print(path)
            return EXIT_OK
        if args.command == "plot":
            print(plot(args.manifest, args.kind, args.out))
            return EXIT_OK
    except ConfigInvalid as exc:
        print(f"config invalid: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (StageFailure, MissingStageOutput) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_STAGE
    return EXIT_STAGE


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
