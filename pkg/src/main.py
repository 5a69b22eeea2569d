"""
Command-line interface for the wireless DSGD simulator.
"""

import argparse
import os
import sys
from dataclasses import fields
from typing import Dict, List, Optional

# Add parent directory to path for imports
sys.path.insert(0, os.path.dirname(os.path.dirname(os.path.abspath(__file__))))

from src.config import ExperimentConfig, build_config, validate_config
from src.errors import ConfigError
from src.experiment import run_experiment
from src.formatter import ResultFormatter
from src.logger import logger

# Plural spellings accepted for the list-valued settings.
FLAG_ALIASES = {
    "sigma": ["--sigmas"],
    "tau_factor": ["--tau-factors"],
    "scheme": ["--schemes"],
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ota-dsgd",
        description="Simulate decentralized SGD over noisy wireless links (P2P vs over-the-air MAC).",
    )
    parser.add_argument("--config", help="flat key = value configuration file")
    parser.add_argument("--quick", action="store_true", help="reduced preset for fast runs")
    parser.add_argument("--log-level", help="override LOG_LEVEL for this run")

    defaults = ExperimentConfig()
    for f in fields(ExperimentConfig):
        flag = "--" + f.name.replace("_", "-")
        parser.add_argument(
            flag,
            *FLAG_ALIASES.get(f.name, []),
            dest=f.name,
            default=None,
            metavar="VALUE",
            help=f"default: {getattr(defaults, f.name)}",
        )
    return parser


def parse_overrides(args: argparse.Namespace) -> Dict[str, str]:
    names = {f.name for f in fields(ExperimentConfig)}
    return {name: value for name, value in vars(args).items() if name in names and value is not None}


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.log_level:
        from src.logger import SimLogger
        SimLogger().set_level(args.log_level)

    logger.info("=" * 60)
    logger.info("🚀 OTA-DSGD experiment starting")
    logger.info("=" * 60)

    try:
        cfg = build_config(quick=args.quick, config_path=args.config, overrides=parse_overrides(args))
    except ConfigError as e:
        logger.error(f"❌ Invalid config: {e}")
        return 1

    if not validate_config(cfg):
        logger.error("Configuration validation failed. Nothing was run.")
        return 1
    logger.info("✅ Configuration validated successfully")

    result = run_experiment(cfg)
    metric = "optimality_gap" if cfg.task == "quadratic" else "accuracy"
    print(ResultFormatter.create_report(result.summary, metric, result.paths))
    return 0


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        logger.info("Interrupted by user")
        sys.exit(130)
    except Exception as e:
        logger.error(f"Unhandled exception: {str(e)}", exc_info=True)
        sys.exit(1)
