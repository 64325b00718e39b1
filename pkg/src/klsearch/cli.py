"""Command-line entry point.

Exit codes: 0 success, 1 a measured-KL bound row failed (verify-bounds),
2 configuration error.
"""

from __future__ import annotations

import argparse
import sys

from .harness import ConfigError, run_command

_COMMANDS = ("blotto-sweep", "verify-bounds", "mcts-eval", "qre-check")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klsearch",
        description="Anchored regret minimization and prior-regularized tree "
        "search experiments with deterministic CSV output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        cmd = sub.add_parser(name, help=f"run the {name} experiment")
        cmd.add_argument("--config", required=True, help="key = value config file")
        cmd.add_argument("--out", required=True, help="output CSV path")
        cmd.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        if name == "verify-bounds":
            cmd.add_argument(
                "--json", action="store_true",
                help="write the bound report as JSON instead of CSV",
            )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        outcome = run_command(
            args.command,
            args.config,
            args.out,
            jobs=args.jobs,
            as_json=getattr(args, "json", False),
        )
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if outcome.hard_failures:
        print(f"{outcome.hard_failures} KL-bound rows failed", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
