"""
Command-line entry point: hmq-detect run --config <path>.
"""
import argparse
import copy
import logging
import logging.config
import os
import sys
import time
from pathlib import Path
from typing import List, Optional

from .config.experiment import ExperimentConfig
from .config.settings import LOG_FILE_HANDLER, LOGGING_CONFIG
from .core.errors import ConfigError
from .services.experiments import ExperimentRunner
from .shared_data.artifact_manager import ArtifactManager

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2


def configure_logging(output_dir: Optional[Path] = None) -> None:
    """Console logging, plus a rotating run.log inside ``output_dir`` when given."""
    config = copy.deepcopy(LOGGING_CONFIG)
    if output_dir is not None:
        handler = dict(LOG_FILE_HANDLER)
        handler["filename"] = str(output_dir / LOG_FILE_HANDLER["filename"])
        config["handlers"]["file"] = handler
        config["root"]["handlers"].append("file")
    logging.config.dictConfig(config)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hmq-detect",
        description="Quantizer design and error-exponent experiments for Neyman-Pearson "
                    "detection of hidden Markov processes.",
    )
    commands = parser.add_subparsers(dest="command", required=True)
    run = commands.add_parser("run", help="run the experiment described by a JSON config")
    run.add_argument("--config", required=True, type=Path, help="experiment config (JSON)")
    run.add_argument("--output-dir", help="override the config's output_dir")
    run.add_argument("--seed", type=int, help="override the master seed")
    run.add_argument("--workers", type=int, default=os.getenv("HMQ_WORKERS"),
                     help="worker processes (default: $HMQ_WORKERS, else the config)")
    return parser


def run(args: argparse.Namespace) -> int:
    """Load the config, run the experiment and write its manifest; returns the exit status."""
    try:
        config = ExperimentConfig.from_file(args.config).with_overrides(
            output_dir=args.output_dir, seed=args.seed, workers=args.workers)
    except ConfigError as e:
        logger.error(f"Invalid config {args.config}: {e.diagnostic()}")
        print(f"error: {e.diagnostic()}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        artifacts = ArtifactManager(Path(config.output_dir))
        configure_logging(artifacts.output_dir)
        started = time.perf_counter()
        summary = ExperimentRunner(config, artifacts).run()
        manifest = artifacts.emit_manifest(config.to_dict(), config.config_hash, config.mc.seed,
                                           time.perf_counter() - started)
    except Exception as e:
        logger.error(f"Error running {config.experiment}: {str(e)}")
        return EXIT_FAILURE

    print(f"{config.experiment} (seed={config.mc.seed}, config_hash={config.config_hash})")
    for line in summary:
        print(f"  {line}")
    print(f"manifest: {manifest}")
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    """Main function for the hmq-detect command."""
    configure_logging()
    args = build_parser().parse_args(argv)
    return run(args)


if __name__ == "__main__":
    sys.exit(main())
