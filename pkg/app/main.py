"""
Command-line entry point.

Handles:
- argument parsing for every subcommand
- config layering (file, --set overrides, --seed/--workers)
- handing the run to the orchestrator and mapping its outcome to an exit code
"""

import argparse
import sys
from typing import List, Optional

from dotenv import load_dotenv

from . import __version__
from .core.errors import WorkbenchError
from .core.logging import get_logger, setup_logging
from .experiments.config import load_config
from .experiments.orchestrator import RunOrchestrator

logger = get_logger(__name__)

SUBCOMMANDS = {
    "data": ("inspect", "fetch"),
    "train": ("rbm", "lbm"),
    "sampler": ("validate",),
    "evolve": ("cnn", "snn"),
    "snn": ("energy",),
}

# command flags that stand for a config field
CONFIG_FLAGS = {"network": "energy.network", "profile": "energy.profile"}


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON experiment config")
    common.add_argument("--seed", type=int, help="run seed (overrides the config)")
    common.add_argument("--workers", type=int, help="parallel fitness evaluations")
    common.add_argument("--out", help="directory that receives the run directory")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                        help="config override such as train.epochs=5 (repeatable)")
    common.add_argument("--log-level", help="DEBUG, INFO, WARNING or ERROR")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = argparse.ArgumentParser(prog="workbench", description="Neuromorphic learning workbench")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="group", required=True)

    for group, actions in SUBCOMMANDS.items():
        sub = commands.add_parser(group).add_subparsers(dest="action", required=True)
        for action in actions:
            p = sub.add_parser(action, parents=[common])
            if group == "data":
                p.add_argument("--images", help="IDX image file")
                p.add_argument("--labels", help="IDX label file")
                p.add_argument("--split", choices=["train", "test"], default="train")
                if action == "fetch":
                    p.add_argument("--dest", help="destination data directory")
            if (group, action) == ("evolve", "cnn"):
                p.add_argument("--resume", help="earlier run directory whose snapshots to continue from")
            if (group, action) == ("snn", "energy"):
                p.add_argument("--network", help="network or detector JSON, or 'reference'")
                p.add_argument("--profile", help="energy profile JSON, or 'reference'")

    report = commands.add_parser("report", parents=[common])
    report.add_argument("--metrics", action="append", default=[], help="metrics.csv to overlay (repeatable)")
    report.add_argument("--evaluations", help="evaluations.csv for the genome chart")
    report.add_argument("--no-reference", action="store_true", help="omit the reference series")
    return parser


def command_name(args: argparse.Namespace) -> str:
    return args.group if args.group == "report" else f"{args.group} {args.action}"


def main(argv: Optional[List[str]] = None) -> int:
    load_dotenv()
    args = build_parser().parse_args(argv)
    setup_logging(args.log_level)
    command = command_name(args)

    values = {field: getattr(args, flag) for flag, field in CONFIG_FLAGS.items()
              if getattr(args, flag, None) is not None}
    try:
        cfg = load_config(args.config, args.overrides, args.seed, args.workers, values)
    except WorkbenchError as e:
        logger.error("Configuration rejected", command=command, error=str(e))
        return e.exit_code

    extras = {k: v for k, v in vars(args).items()
              if k not in ("group", "action", "config", "seed", "workers", "out", "overrides", "log_level")
              and k not in CONFIG_FLAGS}
    final = RunOrchestrator(args.out).run(command, cfg, extras)

    if final["run_dir"] is not None:
        print(f"run: {final['run_dir']}")
    table = final["summary"].get("table")
    if table:
        print(table)
    for error in final["errors"]:
        print(f"error: {error}", file=sys.stderr)
    return final["exit_code"]


if __name__ == "__main__":
    sys.exit(main())
