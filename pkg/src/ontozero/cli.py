"""ontozero command line.

    ontozero synth SPEC.json --out DIR [--seed N]
    ontozero train-onto [--config FILE] [--key=value ...]
    ontozero train-gan | pretrain-kge | train-extractor | eval | ablate-suite   (same options)

Dotted overrides address the run config, e.g. ``--paths.data=fix``,
``--gan.iterations=300`` or ``--ablation=attribute``. Exit status: 0 on
success, 1 on runtime failure, 2 on usage or config errors.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from . import pipeline
from .config import CONFIG_ENV, ConfigError, load_config, parse_overrides
from .zoo import SpecError, SyntheticSpec, write_fixture

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

STEPS = {
    "train-onto": pipeline.train_onto,
    "train-gan": pipeline.train_gan_step,
    "pretrain-kge": pipeline.pretrain_kge,
    "train-extractor": pipeline.train_extractor,
    "eval": pipeline.evaluate,
    "ablate-suite": pipeline.ablate_suite,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ontozero", description="Ontology-guided zero-shot learning pipelines.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    s = sub.add_parser("synth", help="write a synthetic fixture from a spec file")
    s.add_argument("spec")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    for name in STEPS:
        c = sub.add_parser(name, help=f"run {name}")
        c.add_argument("--config", help=f"JSON run config (default: ${CONFIG_ENV})")
    return p


def cmd_synth(args) -> int:
    path = Path(args.spec)
    if not path.is_file():
        raise UsageError(f"spec file not found: {path}")
    try:
        spec = SyntheticSpec.load(path)
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON ({exc})") from None
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    out = write_fixture(spec, args.out)
    print(out)
    return EXIT_OK


def cmd_step(name: str, args, extra) -> int:
    cfg = load_config(args.config, parse_overrides(extra))
    report = STEPS[name](cfg)
    if name == "eval":
        name = pipeline.report_name(cfg)
    path = pipeline.write_report(cfg, name, report)
    print(path)
    return EXIT_OK


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        if args.command == "synth":
            if extra:
                raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
            return cmd_synth(args)
        return cmd_step(args.command, args, extra)
    except (UsageError, ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (pipeline.MissingArtifact, KeyError, ValueError, OSError, FloatingPointError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
