"""
cli — ``blayer-verify <subcommand> --config <path> [--out <dir>]``.

Exit codes: 0 every verdict passes (or is not applicable / indeterminate),
1 at least one fail verdict, 2 usage or config error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from typing import Sequence

from blayer_verify.configs.constants import (
    EXIT_NUMERICAL,
    EXIT_USAGE,
    SUBCOMMANDS,
    TOOL_VERSION,
)
from blayer_verify.configs.settings import load_config
from blayer_verify.errors import (
    BlayerVerifyError,
    ConfigSchemaError,
    MissingArtifactError,
    NumericalFailure,
    RejectedInputError,
)
from blayer_verify.reports.pipeline import run

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)-8s %(name)s: %(message)s"


def configure_logging(level: str) -> None:
    """Root logger on stderr, configured once per process."""
    root = logging.getLogger()
    if root.handlers:
        root.setLevel(level)
        return
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="blayer-verify",
        description="Numerical verification of viscous boundary-layer stability hypotheses and estimates",
    )
    parser.add_argument("subcommand", choices=SUBCOMMANDS,
                        help="stage to run; 'all' runs every stage in dependency order")
    parser.add_argument("-c", "--config", required=True, help="path to the JSON run config")
    parser.add_argument("-o", "--out", default=None,
                        help="output directory (default: config out_dir, then $BLAYER_VERIFY_OUT)")
    parser.add_argument("-w", "--workers", type=int, default=None,
                        help="worker threads for frequency sweeps (default: $BLAYER_VERIFY_WORKERS)")
    parser.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"],
                        help="logging level (default: INFO)")
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors and 0 on --help / --version
        return int(e.code or 0)
    configure_logging(args.log_level)

    try:
        config = load_config(args.config)
        report = run(args.subcommand, config, out_dir=args.out, workers=args.workers)
    except (ConfigSchemaError, MissingArtifactError, RejectedInputError) as e:
        logger.error("%s", e)
        return EXIT_USAGE
    except NumericalFailure as e:
        logger.error("Numerical failure: %s", e)
        if e.diagnostics:
            logger.debug("Diagnostics: %s", e.diagnostics)
        return EXIT_NUMERICAL
    except BlayerVerifyError as e:
        logger.error("%s", e)
        return EXIT_NUMERICAL
    except Exception:
        logger.exception("Unexpected error")
        return EXIT_NUMERICAL

    for name, check in report.failures().items():
        logger.warning("FAIL %s %s", name, check.witness or "")
    return report.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
