"""Command-line entry point: ``cdrses <subcommand> [options]``.

Every stage subcommand reads the same flat config file; flags override it.
Exit status is 0 on success, 1 on internal errors, 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, RunConfig, load_config

PATH_FLAGS = ("cdr", "cells", "listings", "admin", "boundary", "outdir", "census_district", "census_age")


def _stage_parser(sub, name, help_text):
    p = sub.add_parser(name, help=help_text)
    p.add_argument("--config", help="flat key = value config file")
    for key in PATH_FLAGS:
        p.add_argument(f"--{key.replace('_', '-')}", dest=key)
    p.add_argument("--threads", type=int)
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config key (repeatable)")
    p.add_argument("--report-json", action="store_true",
                   help="print the ingest report as JSON instead of key=value lines")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cdrses", description="CDR mobility and housing-price analysis")
    sub = parser.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="write a synthetic city and its CDR")
    s.add_argument("--seed", type=int)
    s.add_argument("--sims", type=int)
    s.add_argument("--cells", type=int)
    s.add_argument("--days", type=int)
    s.add_argument("--excursion", type=float)
    s.add_argument("--out", required=True)
    s.add_argument("--no-cdr", action="store_true", help="write only the city files")

    for name in pipeline.STAGES:
        _stage_parser(sub, name, f"run the {name} stage")
    _stage_parser(sub, "pipeline", "run every stage in order")

    r = sub.add_parser("report", help="summarize a finished run directory")
    r.add_argument("outdir")
    return parser


def _config(args) -> RunConfig:
    overrides = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        k, v = item.split("=", 1)
        overrides[k.strip()] = v.strip()
    for key in PATH_FLAGS:
        overrides[key] = getattr(args, key)
    overrides["threads"] = args.threads
    return load_config(args.config, **overrides)


def _cmd_synth(args):
    from .synth import SynthConfig, write_city

    kw = {"seed": args.seed, "n_sims": args.sims, "n_cells": args.cells, "days": args.days,
          "excursion": args.excursion}
    cfg = SynthConfig(**{k: v for k, v in kw.items() if v is not None})
    paths = write_city(cfg, args.out, write_cdr=not args.no_cdr)
    # ready-made run config; relative paths resolve against its directory
    lines = [f"{k} = {paths[k].name}" for k in PATH_FLAGS if k in paths]
    lines += ["outdir = out", f"start = {cfg.start.isoformat()}", f"days = {cfg.days}",
              "holidays = " + ",".join(h.isoformat() for h in cfg.holidays)]
    paths["config"] = Path(args.out) / "run.cfg"
    paths["config"].write_text("\n".join(lines) + "\n")
    for k in sorted(paths):
        print(f"{k}={paths[k]}")


def _emit_report(rep, as_json):
    if rep is None:
        return
    print(rep.to_json() if as_json else "\n".join(rep.lines()), file=sys.stderr)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        if args.command == "synth":
            _cmd_synth(args)
        elif args.command == "report":
            sys.stdout.write(pipeline.report(args.outdir))
        else:
            cfg = _config(args)
            stages = pipeline.STAGES if args.command == "pipeline" else (args.command,)
            ctx = pipeline.Context()
            for name in stages:
                result = pipeline.run_stage(name, cfg, ctx)
                if name == "ingest":
                    _emit_report(result, args.report_json)
    except (ConfigError, ValueError) as exc:
        print(f"cdrses: error: {exc}", file=sys.stderr)
        return 2
    except pipeline.StageError as exc:
        print(f"cdrses: error: {exc}", file=sys.stderr)
        return 2 if exc.input_error else 1
    except OSError as exc:
        print(f"cdrses: error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # pragma: no cover - last-resort guard
        print(f"cdrses: internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
