"""
Command-line entry point

    python -m diffusive_transport_lab.cli converge --config configs/headline_disk.json --out results/disk

Every subcommand reads one JSON StudyConfig, runs the study of the same name
(or, for `run`, every study the config lists) and writes report.json plus CSV
tables to --out. The exit status is 0 when every band passes, 1 when a band
fails and 2 on a configuration or study error.
"""

import argparse
import logging
import sys
from typing import List, Optional

try:
    from .errors import ConfigurationError, StudyError
    from .harness import STUDIES, StudyConfig, run_study
except ImportError:
    from errors import ConfigurationError, StudyError
    from harness import STUDIES, StudyConfig, run_study


logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffusive_transport_lab",
        description="Diffusive-limit transport studies: convergence, boundary layers, remainder estimates.",
    )
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    commands = parser.add_subparsers(dest="command", required=True)
    for name in ("run",) + tuple(STUDIES):
        help_text = "every study listed in the config" if name == "run" else f"the {name} study"
        sub = commands.add_parser(name, help=f"run {help_text}")
        sub.add_argument("--config", help="JSON study config (defaults are used when omitted)")
        sub.add_argument("--out", help="output directory (overrides the config)")
        sub.add_argument("--threads", type=int, help="worker threads for independent solves")
    return parser


def load_config(path: Optional[str], command: str) -> StudyConfig:
    config = StudyConfig.from_file(path) if path else StudyConfig()
    if command == "run":
        return config
    document = config.model_dump(mode="json")
    document["studies"] = [command]
    return StudyConfig.from_dict(document)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=getattr(logging, args.log_level), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        config = load_config(args.config, args.command)
        if args.threads is not None and args.threads < 1:
            raise ConfigurationError(f"--threads must be >= 1, got {args.threads}")
        report = run_study(config, args.out, args.threads)
    except ConfigurationError as exc:
        logger.error("configuration error: %s", exc)
        return 2
    except StudyError as exc:
        logger.error("study failed at stage %s: %s", exc.stage, exc.cause)
        return 2
    for check in report.failures():
        logger.error("band failed: %s = %s not in [%s, %s]", check.name, check.value, check.low, check.high)
    logger.info("report written to %s", args.out or config.output)
    return 0 if report.passed else 1


if __name__ == "__main__":
    sys.exit(main())
