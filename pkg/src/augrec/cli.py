"""Command-line front end: ``augrec <subcommand> [--config FILE] [--flags]``.

Every flag mirrors a key of the ``[augrec]`` section of the config file;
flags override the file.  Failures print one line to stderr of the form
``error class=<ExceptionName> code=<exit code> msg=<message>``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import verify
from .errors import AcceptanceError, AugrecError, ConfigError
from .experiment import (FIELD_TYPES, FINETUNE_STAGES, ExperimentConfig, Run, check_report, config_key,
                         run_dir_for, set_deterministic)

SUBCOMMANDS = ("gen-corpus", "train-classifier", "pretrain", "finetune", "synthesize", "evaluate", "report",
               "verify-losses", "reproduce")
USAGE_EXIT = 64


class UsageError(AugrecError):
    exit_code = USAGE_EXIT


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _flag(name: str) -> str:
    return "--" + config_key(name).replace("_", "-")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="augrec", description="Augmented reconstruction loss toolkit (synthetic corpora).")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for cmd in SUBCOMMANDS:
        p = sub.add_parser(cmd)
        p.add_argument("--config", help="key/value config file with one [augrec] section")
        p.add_argument("--runs-root", help=f"parent of run directories (env AUGREC_RUNS, default ./runs)")
        p.add_argument("--run-dir", help="explicit run directory instead of <runs-root>/<config-hash>-seed<seed>")
        p.add_argument("-v", "--verbose", action="store_true")
        if cmd == "verify-losses":
            p.add_argument("--quick", action="store_true", help="fewer random configurations")
            continue
        for f in fields(ExperimentConfig):
            kind = FIELD_TYPES[f.name]
            kw = {"dest": f.name, "default": None,
                  "help": f"config key: {config_key(f.name)} (default {f.default})"}
            if kind is bool:
                kw["type"] = lambda s: s.lower() in ("1", "true", "yes", "on")
            else:
                kw["type"] = kind
            if f.name == "stage":
                kw["choices"] = FINETUNE_STAGES
            p.add_argument(_flag(f.name), **kw)
    return parser


def _config(args) -> ExperimentConfig:
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig)}
    if args.config:
        return ExperimentConfig.read(args.config, **overrides)
    return ExperimentConfig(**{k: v for k, v in overrides.items() if v is not None})


def run_command(args) -> int:
    if args.command == "verify-losses":
        results = verify.run_all(quick=args.quick)
        for r in results:
            print(r.line())
        return 0 if all(r.passed for r in results) else 1

    cfg = _config(args)
    run = Run(cfg, Path(args.run_dir) if args.run_dir else run_dir_for(cfg, args.runs_root))
    set_deterministic()
    cmd = args.command
    if cmd == "gen-corpus":
        run.gen_corpus()
    elif cmd == "train-classifier":
        run.train_classifiers()
    elif cmd == "pretrain":
        run.pretrain()
    elif cmd == "finetune":
        run.finetune(cfg.stage)
    elif cmd == "synthesize":
        run.synthesize(cfg.stage)
    elif cmd == "evaluate":
        report = run.evaluate()
        print(report.to_csv(), end="")
    elif cmd == "report":
        print(run.report())
    elif cmd == "reproduce":
        report = run.reproduce()
        print(report.to_csv(), end="")
        criteria = check_report(report)
        for c in criteria:
            print(c.line())
        if not all(c.passed for c in criteria):
            raise AcceptanceError("acceptance criteria violated; see report")
    print(f"run directory: {run.path}")
    return 0


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
        return run_command(args)
    except AugrecError as exc:
        msg = str(exc).replace("\n", " ")
        print(f"error class={type(exc).__name__} code={exc.exit_code} msg={msg}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
