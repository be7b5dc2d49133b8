"""Command line entry point.

    did6g run <scenario> --config <path> --seed <u64> --output <report.json> [--state-out <ledger.jsonl>]
    did6g ledger inspect --state <ledger.jsonl>

Exit codes: 0 success, 2 scenario failure, 1 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Optional, Sequence

from .errors import LedgerFormatError
from .registry import Ledger
from .scenarios import SCENARIOS, ConfigError, load_config, run_scenario

EXIT_OK, EXIT_USAGE, EXIT_FAILURE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 by default, which means scenario failure here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _u64(text: str) -> int:
    try:
        value = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="did6g", description="Decentralized identity scenarios for multi-operator networks.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="run one scenario and write its JSON report")
    run.add_argument("scenario", choices=sorted(SCENARIOS))
    run.add_argument("--config", required=True, type=Path)
    run.add_argument("--seed", required=True, type=_u64)
    run.add_argument("--output", required=True, type=Path)
    run.add_argument("--state-out", type=Path, help="also write the registry ledger as JSON lines")

    ledger = sub.add_parser("ledger", help="ledger tools")
    lsub = ledger.add_subparsers(dest="ledger_command", required=True, parser_class=_Parser)
    inspect = lsub.add_parser("inspect", help="print one summary line per block")
    inspect.add_argument("--state", required=True, type=Path)
    return parser


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    report = run_scenario(args.scenario, config, args.seed)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    args.output.write_text(report.to_json(), encoding="utf-8")
    if args.state_out is not None:
        ledger = getattr(report, "ledger", None)
        args.state_out.write_bytes((ledger if ledger is not None else Ledger()).dump())
    outcome = report.to_wire()["outcome"]
    if report.success:
        print(f"{args.scenario}: success -> {args.output}")
        return EXIT_OK
    print(f"{args.scenario}: failure at {outcome['step']}: {outcome['reason']} -> {args.output}")
    return EXIT_FAILURE


def _inspect(args: argparse.Namespace) -> int:
    try:
        data = args.state.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read {args.state}: {exc}") from None
    ledger = Ledger.load(data)
    for block in ledger.blocks:
        print(json.dumps(block.summary(), sort_keys=True))
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "run":
            return _run(args)
        return _inspect(args)
    except (ConfigError, LedgerFormatError) as exc:
        print(f"did6g: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (KeyError, TypeError, AttributeError, ValueError) as exc:
        # a config of the right JSON shape at the top level but wrong inside
        print(f"did6g: error: invalid input: {exc!r}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
