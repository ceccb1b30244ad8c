from typing import Optional, Sequence
from pathlib import Path
import argparse
import logging
import sys

from cutfeec.config import load_config
from cutfeec.experiments import run
from cutfeec.model.enums import Command
from cutfeec.util import CutFeecException, cap_threads

log = logging.getLogger("cutfeec")


def build_arg_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cutfeec",
        description="Ghost-stabilized unfitted finite element exterior calculus experiments.",
    )
    parser.add_argument("command", choices=[str(c) for c in Command], help="experiment to run")
    parser.add_argument("--config", required=True, type=Path, help="experiment configuration file")
    parser.add_argument("--out", type=Path, default=None, help="CSV output path (default: [output] path or stdout)")
    parser.add_argument("--m", type=int, default=None, help="override the mesh resolution list with a single m")
    parser.add_argument("--k", type=int, default=None, help="override the form degree")
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_arg_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )

    try:
        cap_threads(strict=True)

        cfg = load_config(args.config).with_overrides(args.m, args.k)
        out = args.out if args.out is not None else cfg.output
        report = run(Command(args.command), cfg, out)
        if out is None:
            sys.stdout.write(report.dumps())
    except CutFeecException as e:
        log.error(f"{type(e).__name__}: {e}")
        return e.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
