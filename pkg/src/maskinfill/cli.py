"""Command line entry point: one subcommand per pipeline stage plus ``pipeline``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .config import PipelineConfig
from .corpus import save_split, synthetic_splits
from .pipeline import DEFAULT_LAST, STAGES, MixedConfigError, Pipeline, StageError

log = logging.getLogger("maskinfill")


def _config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if args.seed is not None:
        cfg.run.seed = args.seed
    if args.out is not None:
        cfg.paths.out_dir = args.out
    return cfg.validate()


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="INI configuration file")
    p.add_argument("--seed", type=int, help="override run.seed")
    p.add_argument("--out", help="output directory (overrides paths.out_dir)")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="maskinfill", description="Mask-and-infill sentiment transfer.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pipeline", help="run all stages, resuming completed ones")
    _common(p)
    p.add_argument("--stage", choices=STAGES, default=DEFAULT_LAST, help="last stage to run (default: evaluate)")

    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run only the {stage} stage")
        _common(p)
        if stage == "gen-synthetic":
            p.add_argument("--n", type=int, help="sentences per attribute for a standalone train split")
            p.add_argument("--dest", type=Path, help="write splits here instead of <out>/data")
        if stage == "transfer":
            p.add_argument("--text", help="transfer a single sentence and print the result")
            p.add_argument("--target", help="target attribute for --text (default: the opposite one)")

    p = sub.add_parser("show-config", help="print the effective configuration")
    _common(p)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")
    try:
        cfg = _config(args)
    except (ValueError, OSError) as exc:
        print(f"error: bad configuration: {exc}", file=sys.stderr)
        return 2
    if args.command == "show-config":
        sys.stdout.write(cfg.to_text())
        return 0

    if args.command == "gen-synthetic" and args.dest is not None:
        d = cfg.data
        n = args.n or d.synthetic_train
        for name, sents in synthetic_splits(n, d.synthetic_dev, d.synthetic_test, cfg.run.seed).items():
            save_split(sents, args.dest, name)
        print(f"wrote synthetic splits to {args.dest}")
        return 0

    pipe = Pipeline(cfg)
    try:
        if args.command == "pipeline":
            header = pipe.run(args.stage)
            if header:
                print(f"{header['model']}: accuracy {header['accuracy']} self-BLEU {header['bleu']}")
            if args.stage == "sweep":
                print((pipe.out / "sweep.csv").read_text(), end="")
        elif args.command == "transfer" and args.text:
            src, masked, out = pipe.transfer_text(args.text, args.target)
            print(f"{src}\t{masked}\t{out}")
        else:
            result = pipe.run_stage(args.command)
            if args.command == "sweep":
                print((pipe.out / "sweep.csv").read_text(), end="")
            elif args.command == "evaluate" and result is not None:
                print(f"{result.model}: accuracy {result.accuracy:.4f} self-BLEU {result.bleu:.4f}")
    except StageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except MixedConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
