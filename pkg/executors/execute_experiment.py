import os
import sys

project_root = os.path.abspath(os.path.join(os.path.dirname(__file__), ".."))
if project_root not in sys.path:
    sys.path.insert(0, project_root)

import argparse
import logging
from typing import List, Optional

from config import CONFIGS_DIR
from evaluation.tradeoff import parse_threshold_grid
from executors.commands import ANALYZE_MODES, Experiment, cmd_analyze, cmd_eval, cmd_sweep, cmd_train
from executors.run_config import ConfigError, RunConfig
from helpers.logger_config import LoggerManager
from ingestion.schema import DatasetError
from modeling.checkpoint import CheckpointError
from training.two_stage import DivergenceError

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2

DEFAULT_CONFIG = os.path.join(CONFIGS_DIR, "synthetic_default.json")

logger = LoggerManager().get_logger()


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="execute_experiment",
        description="Train, sweep and analyse an early-exit encoder from one JSON run config.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=DEFAULT_CONFIG, help="Run config JSON (default: %(default)s)")
    common.add_argument("--seed", type=int, help="Override the run seed")
    common.add_argument("--out", help="Override the output directory")
    common.add_argument("--threshold-grid", help="Comma separated entropy thresholds, e.g. 0,0.05,0.1")
    common.add_argument("--no-progress", action="store_true", help="Hide progress bars")
    common.add_argument("--verbose", action="store_true", help="Echo INFO logs to stderr")

    commands = parser.add_subparsers(dest="command", required=True)

    train = commands.add_parser("train", parents=[common], help="Two-stage fine-tuning")
    train.add_argument("--stage", choices=["1", "2", "all"], default="all",
                       help="1: backbone only, 2: intermediate ramps from stage1.ckpt, all: both")

    sweep = commands.add_parser("sweep", parents=[common], help="Threshold sweep over the dev split")
    sweep.add_argument("--checkpoint", help="Defaults to <out>/stage2.ckpt")

    analyze = commands.add_parser("analyze", parents=[common], help="Layerwise and saving analyses")
    analyze.add_argument("mode", choices=ANALYZE_MODES)
    analyze.add_argument("--checkpoint", help="Defaults to <out>/stage2.ckpt")

    evaluate = commands.add_parser("eval", parents=[common], help="Evaluate one threshold on one split")
    evaluate.add_argument("--threshold", type=float, required=True, help="Entropy threshold S in nats")
    evaluate.add_argument("--split", help="Split name (default: the sweep split)")
    evaluate.add_argument("--checkpoint", help="Defaults to <out>/stage2.ckpt")
    return parser


def load_run_config(args: argparse.Namespace) -> RunConfig:
    run_config = RunConfig.load(args.config)
    grid = None
    if args.threshold_grid:
        try:
            grid = parse_threshold_grid(args.threshold_grid)
        except ValueError as e:
            raise ConfigError(f"--threshold-grid: {e}") from e
    return run_config.with_overrides(seed=args.seed, output_dir=args.out, grid=grid)


def run(args: argparse.Namespace) -> None:
    run_config = load_run_config(args)
    experiment = Experiment(run_config, logger=logger, progress=not args.no_progress)
    logger.info(f"Running {args.command} with seed {run_config.seed}, output in {run_config.output_dir}")

    if args.command == "train":
        cmd_train(experiment, stage=args.stage)
    elif args.command == "sweep":
        cmd_sweep(experiment, checkpoint=args.checkpoint)
    elif args.command == "analyze":
        cmd_analyze(experiment, args.mode, checkpoint=args.checkpoint)
    elif args.command == "eval":
        if args.threshold < 0:
            raise ConfigError(f"--threshold must be non-negative, got {args.threshold}")
        cmd_eval(experiment, args.threshold, split_name=args.split, checkpoint=args.checkpoint)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    if args.verbose:
        LoggerManager().set_console_level(logging.INFO)
    try:
        run(args)
    except ConfigError as e:
        logger.error(f"Invalid configuration: {e}")
        return EXIT_CONFIG
    except (FileNotFoundError, CheckpointError, DatasetError, DivergenceError, KeyError, ValueError) as e:
        logger.error(f"{args.command} failed: {e}")
        return EXIT_RUNTIME
    logger.info(f"Finished {args.command}")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
