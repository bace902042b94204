"""Command-line driver.

Subcommands: synth, decompose, extract, train, fuse-search, eval, report
and run (all experiment stages in order).  Settings come from defaults,
then an optional JSON ``--config`` file, then explicit flags.

Exit codes: 0 success, 2 validation, 3 I/O or missing artefact, 4 numeric.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import pipeline, synth
from .errors import DmadError, FormatError, MissingFileError, ValidationError

log = logging.getLogger("dmad")

EXPERIMENT_KEYS = ("manifest", "out_dir", "method", "decomposer", "extractor", "C", "tune_c", "weights", "seed")
SYNTH_KEYS = ("data", "subjects", "morphs", "print_scan", "alpha", "seed")
DEFAULTS = {
    "manifest": "data/manifest.txt",
    "out_dir": "experiment",
    "data": "data",
    "subjects": 39,
    "morphs": 90,
    "print_scan": False,
    "alpha": 0.5,
    "seed": 42,
}


def _parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON file with default settings")
    common.add_argument("--seed", type=int, help="master seed (default 42)")
    common.add_argument("-v", "--verbose", action="store_true")

    exp = argparse.ArgumentParser(add_help=False)
    exp.add_argument("--manifest", help="dataset manifest (default data/manifest.txt)")
    exp.add_argument("--out", dest="out_dir", help="experiment directory (default experiment)")
    exp.add_argument("--method", choices=pipeline.METHODS)
    exp.add_argument("--decomposer", choices=tuple(pipeline.DECOMPOSERS))
    exp.add_argument("--extractor", help="builtin or external:<dir>")
    exp.add_argument("--C", type=float, dest="C", help="SVM regularisation (default 1.0)")
    exp.add_argument("--tune-c", action="store_const", const=True, dest="tune_c",
                     help="pick C from {0.01, 0.1, 1, 10} by train D-EER")
    exp.add_argument("--weights", help="search, paper, or 6 numbers 'wr,wn,w1,w2,w3,w4'")

    p = argparse.ArgumentParser(prog="dmad", description="Differential morphing-attack detection toolkit")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", parents=[common], help="render a synthetic dataset")
    s.add_argument("--data", help="output directory (default data)")
    s.add_argument("--subjects", type=int)
    s.add_argument("--morphs", type=int)
    s.add_argument("--alpha", type=float, help="morph blend factor (default 0.5)")
    s.add_argument("--print-scan", action="store_const", const=True, dest="print_scan",
                   help="print-scan degrade every passport")

    for name in pipeline.STAGES:
        if name == "report":
            continue
        sub.add_parser(name, parents=[common, exp], help=f"run the {name} stage")
    r = sub.add_parser("report", parents=[common, exp], help="render DET SVGs and tables")
    r.add_argument("--summary", nargs="+", help="summary CSV files (default: this experiment's)")
    sub.add_parser("run", parents=[common, exp], help="all experiment stages in order")
    return p


def resolve_settings(args) -> dict:
    settings = dict(DEFAULTS)
    if args.config:
        path = Path(args.config)
        try:
            loaded = json.loads(path.read_text())
        except FileNotFoundError:
            raise MissingFileError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: {exc}") from None
        unknown = set(loaded) - set(EXPERIMENT_KEYS) - set(SYNTH_KEYS)
        if unknown:
            raise ValidationError(f"unknown config keys: {', '.join(sorted(unknown))}")
        settings.update(loaded)
    for key, val in vars(args).items():
        if val is not None and key not in ("command", "config", "verbose", "summary"):
            settings[key] = val
    return settings


def experiment_config(settings) -> pipeline.ExperimentConfig:
    return pipeline.ExperimentConfig(**{k: settings[k] for k in EXPERIMENT_KEYS if k in settings})


def _main(argv) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    settings = resolve_settings(args)
    if args.command == "synth":
        m = synth.emit_dataset(settings["data"], n_subjects=settings["subjects"], n_morphs=settings["morphs"],
                               master_seed=settings["seed"], print_scan=settings["print_scan"],
                               alpha=settings["alpha"])
        print(f"wrote {len(m)} records to {Path(settings['data']) / 'manifest.txt'}")
        return 0
    cfg = experiment_config(settings)
    if args.command == "run":
        print(pipeline.run_experiment(cfg), end="")
    elif args.command == "report":
        if args.summary:
            paths = pipeline.report(args.summary, cfg.out / "report")
        else:
            paths = pipeline.run_stage(cfg, "report")
        for path in paths:
            print(path)
    else:
        out = pipeline.run_stage(cfg, args.command)
        if isinstance(out, str):
            print(out, end="")
    return 0


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, DmadError):
        return exc.exit_code
    if isinstance(exc, (OSError, EOFError)):
        return 3
    if isinstance(exc, ArithmeticError):
        return 4
    if isinstance(exc, (ValueError, TypeError, KeyError)):
        return 2
    raise exc


def main(argv=None) -> int:
    try:
        return _main(sys.argv[1:] if argv is None else argv)
    except Exception as exc:  # mapped to documented exit codes
        code = exit_code(exc)
        stage = getattr(exc, "failed_stage", None)
        where = f" in stage '{stage}'" if stage else ""
        print(f"dmad: error{where}: {exc}", file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
