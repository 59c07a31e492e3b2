"""Command line entry point: ``helmgcm {simulate,propagate,reconstruct,report}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from pathlib import Path

from . import pipeline
from .gcm import StageError
from .io import read_mset, write_mset

# argparse itself exits with 2 on usage errors
EXIT_OK, EXIT_FAILURE = 0, 1


class CommandError(Exception):
    def __init__(self, stage: str, message: str):
        super().__init__(message)
        self.stage = stage


def _config(args) -> pipeline.RunConfig:
    try:
        cfg = pipeline.RunConfig.load(args.config) if args.config else pipeline.RunConfig()
        changes = {}
        if args.seed is not None:
            changes["seed"] = args.seed
        if getattr(args, "mode", None):
            changes["mode"] = args.mode
        if args.out:
            changes["out"] = args.out
        if changes:
            cfg = pipeline.RunConfig(**{**vars(cfg), **changes})
    except (OSError, ValueError) as exc:
        raise CommandError("config", str(exc)) from exc
    return cfg


def _stage(name, fn, *a, **kw):
    """Run ``fn``; warnings go to stderr and errors become :class:`CommandError` tagged ``name``."""
    try:
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            out = fn(*a, **kw)
        for w in caught:
            print(f"warning [{name}]: {w.message}", file=sys.stderr)
        return out
    except StageError as exc:
        raise CommandError(f"{name}/{exc.stage}", str(exc)) from exc
    except (OSError, ValueError, RuntimeError, ArithmeticError) as exc:
        raise CommandError(name, str(exc)) from exc


def cmd_simulate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    m = _stage("simulate", pipeline.simulate, cfg)
    _stage("write", out.mkdir, parents=True, exist_ok=True)
    _stage("write", write_mset, out / "measurements.mset", m)
    (out / "config.txt").write_text(cfg.to_text())
    print(out / "measurements.mset")
    return EXIT_OK


def cmd_propagate(args) -> int:
    cfg = _config(args)
    out = Path(cfg.out)
    m = _stage("read", read_mset, args.input)
    p = _stage("propagate", pipeline.propagate_measurements, m, cfg.target_z)
    region = _stage("localize", pipeline.locate, p, cfg)
    _stage("write", out.mkdir, parents=True, exist_ok=True)
    _stage("write", write_mset, out / "propagated.mset", p)
    info = region.to_dict()
    (out / "region.json").write_text(json.dumps(info, indent=2))
    print(json.dumps(info))
    return EXIT_OK


def cmd_reconstruct(args) -> int:
    cfg = _config(args)
    m = _stage("read", read_mset, args.input)
    result = _stage("reconstruct", pipeline.reconstruct, m, cfg)
    report = _stage("write", pipeline.write_result, cfg.out, result, cfg, cfg.grid())
    print(pipeline.summarize(report))
    return EXIT_OK


def cmd_report(args) -> int:
    path = Path(args.result_dir) / "report.json"
    if not path.is_file():
        raise CommandError("report", f"no report.json in {args.result_dir}")
    try:
        report = json.loads(path.read_text())
    except ValueError as exc:
        raise CommandError("report", f"{path}: {exc}") from exc
    print(pipeline.summarize(report))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="helmgcm", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, mode=False):
        p.add_argument("--config", help="flat key = value configuration file")
        p.add_argument("--seed", type=int, help="noise seed (overrides the config)")
        p.add_argument("--out", help="output directory (overrides the config)")
        if mode:
            p.add_argument("--mode", choices=pipeline.MODES, help="boundary data mode")

    p = sub.add_parser("simulate", help="synthetic plane measurements of the truth")
    common(p)
    p.set_defaults(func=cmd_simulate)
    p = sub.add_parser("propagate", help="move data to the bottom face and locate targets")
    p.add_argument("input", help=".mset file")
    common(p)
    p.set_defaults(func=cmd_propagate)
    p = sub.add_parser("reconstruct", help="run the reconstruction on propagated data")
    p.add_argument("input", help="propagated .mset file")
    common(p, mode=True)
    p.set_defaults(func=cmd_reconstruct)
    p = sub.add_parser("report", help="summarize a result directory")
    p.add_argument("result_dir")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(name)s: %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error [{exc.stage}]: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
