"""
The bellforge command line: one subcommand per pipeline stage.
"""

import argparse
import logging
from pathlib import Path
from typing import Callable, Dict, Optional, Sequence

from .config import load_config
from .errors import FatalException
from .forge import Forge
from .logging import PrettyLogger, enable_logging

LOGGER = logging.getLogger("bellforge")
PRETTY = PrettyLogger(LOGGER)

COMMANDS = ("gen-questions", "audit", "selftest", "prepare", "oracle")


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bellforge",
        description="Audit, self-test and state preparation checks for parallel Bell pairs.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", default=None, help="JSON run configuration")
    parser.add_argument("--seed", type=int, default=None, help="Root seed for every random stream")
    parser.add_argument("--out", default=None, help="Directory the reports are written to")
    parser.add_argument("--gate", type=float, default=None,
                        help="Largest epsilon (audit) or isometry distance (selftest) that passes")
    parser.add_argument("--trials", type=int, default=None, help="Sampled rounds per audit cell")
    parser.add_argument("--alpha", type=float, default=None, help="Confidence parameter of the radii")
    parser.add_argument("--strategy", default=None,
                        help="'honest', 'conjugated' or the path of a strategy file")
    parser.add_argument("--chi", default=None, help="Special question for 'prepare' (default: the first)")
    parser.add_argument("--threshold", type=float, default=None,
                        help="Trace distance threshold for 'prepare' (default: delta^(2/3))")
    parser.add_argument("--count", type=int, default=1000, help="Synthetic families for 'oracle'")
    parser.add_argument("-v", "--verbose", action="store_true", help="Log debug messages")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """
    Run one subcommand. Returns 0 when the stage ran and every gate passed, 1 otherwise.
    """
    args = _parser().parse_args(argv)
    enable_logging(level=logging.DEBUG if args.verbose else logging.INFO)

    try:
        config = load_config(args.config).with_overrides(
            seed=args.seed,
            out=args.out,
            gate=args.gate,
            trials_per_cell=args.trials,
            alpha=args.alpha,
            strategy=args.strategy,
        )
    except FatalException as error:
        PRETTY.error(str(error))
        return 1

    forge = Forge(config, Path(config.out))
    commands: Dict[str, Callable[[], Optional[object]]] = {
        "gen-questions": forge.gen_questions,
        "audit": forge.audit,
        "selftest": forge.selftest,
        "prepare": lambda: forge.prepare(args.chi, args.threshold),
        "oracle": lambda: forge.oracle(args.count),
    }
    result = commands[args.command]()
    forge.print_summary()

    if result is None or forge.summary.has_failures():
        return 1
    return 0
