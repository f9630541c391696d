"""Command line entry point: ``fakestars <command> --config PATH --out DIR``."""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .config import ConfigError, load_config
from .events import CorruptInputError
from .pipeline import COMMANDS, PipelineError

log = logging.getLogger("fakestars")

HELP = {
    "ingest": "parse GHArchive-style event files into the working directory",
    "synth": "generate a synthetic event stream with planted campaigns",
    "detect": "flag low-activity and lockstep fake stars",
    "campaigns": "group flagged stars into per-repository campaigns",
    "evaluate": "score detections against synthetic ground truth",
    "measure": "prevalence, activity clusters and name tokens",
    "regress": "fixed-effects panel regressions of real-star growth",
    "enrich": "deletion ratios and trending/package cross-references",
    "report": "run summary totals",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="YAML pipeline configuration")
    common.add_argument("--out", metavar="DIR", help="working/output directory (overrides output_dir)")
    common.add_argument("--threads", type=int, metavar="N", help="worker threads for lockstep search")
    common.add_argument("--plot-data", action="store_true", help="also write plot-data tables (measure, report)")
    common.add_argument("--dump-config", action="store_true", help="print the effective configuration and exit")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="fakestars", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=HELP[name], description=HELP[name])
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = load_config(args.config)
        overrides = {}
        if args.out is not None:
            overrides["output_dir"] = str(Path(args.out).resolve())
        if args.threads is not None:
            if args.threads < 1:
                raise ConfigError("--threads must be >= 1")
            overrides["threads"] = args.threads
        cfg = dataclasses.replace(cfg, **overrides)
        if args.dump_config:
            sys.stdout.write(cfg.dump())
            return 0
        out = Path(cfg.output_dir)
        if args.command not in ("ingest", "synth") and not out.is_dir():
            raise PipelineError(f"working directory {out} does not exist; run ingest or synth first")
        run = COMMANDS[args.command]
        if args.command in ("measure", "report"):
            summary = run(cfg, out, plot_data=args.plot_data)
        else:
            summary = run(cfg, out)
    except (ConfigError, PipelineError, CorruptInputError) as exc:
        print(f"fakestars {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"fakestars {args.command}: error: {exc}", file=sys.stderr)
        return 1
    print(json.dumps(summary, sort_keys=True, default=str))
    return 0


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
