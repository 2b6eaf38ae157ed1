import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from pydantic import ValidationError

from pharmonic import __version__
from pharmonic.cli import COMMAND_GROUPS
from pharmonic.cli.common import RunContext, load_config_file, run_config
from pharmonic.core.config import settings
from pharmonic.core.exceptions import InvalidParameterError, PharmonicError

logger = logging.getLogger(__name__)

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'


def configure_logging(level: str) -> None:
    # stdout is reserved for --json payloads
    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format=LOG_FORMAT,
        handlers=[logging.StreamHandler(sys.stderr)],
        force=True,
    )


def _add_global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    def default(value):
        return argparse.SUPPRESS if suppress else value

    parser.add_argument("--out", default=default(settings.OUTPUT_DIR), help="output directory")
    parser.add_argument("--seed", type=int, default=default(settings.DEFAULT_SEED))
    parser.add_argument("--json", dest="json_output", action="store_true", default=default(False),
                        help="print the result summary as JSON on stdout")
    parser.add_argument("--config", default=default(None), help="JSON file with parameter defaults")
    parser.add_argument("--log-level", default=default(settings.LOG_LEVEL))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pharmonic", description="p-harmonic functions with boundary singularities")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    _add_global_flags(parser, suppress=False)
    subparsers = parser.add_subparsers(dest="command", required=True)
    for group in COMMAND_GROUPS:
        group.register(subparsers)
    # global flags are accepted after the command name as well
    for sub in subparsers.choices.values():
        _add_global_flags(sub, suppress=True)
    parser.set_defaults(command_parsers=subparsers.choices)
    return parser


def _apply_config(parser: argparse.ArgumentParser, args, argv: Optional[List[str]]):
    params = load_config_file(args.config)
    sub = args.command_parsers[args.command]
    known = {action.dest for action in sub._actions} - {"help", "out", "seed", "json_output", "config", "log_level"}
    unknown = set(params) - known
    if unknown:
        raise InvalidParameterError(f"unknown keys for {args.command}: {sorted(unknown)}")
    sub.set_defaults(**params)
    return parser.parse_args(argv)


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    configure_logging(args.log_level)
    try:
        if args.config:
            args = _apply_config(parser, args, argv)
        run = run_config(args.command, args, args.seed)
        ctx = RunContext(run, Path(args.out), args.json_output)
        logger.info(f"pharmonic {__version__}: {args.command} (seed {args.seed})")
        return args.handler(args, ctx)
    except PharmonicError as exc:
        logger.error(f"{args.command} failed: {exc.detail}")
        return exc.exit_code
    except ValidationError as exc:
        logger.error(f"{args.command}: invalid input: {exc}")
        return 2
    except Exception as exc:
        logger.error(f"{args.command}: unexpected error: {exc}", exc_info=True)
        return 1


if __name__ == "__main__":
    sys.exit(main())
