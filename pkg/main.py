import argparse
import logging
import sys
from dataclasses import fields

from entity.RunConfig import RunConfig
from service.PipelineService import PipelineService
from util.ConfigUtil import ConfigUtil
from util.Constant import Constant
from util.Errors import (ConfigError, DatasetError, EmptyMutantSetError, EmptyPassedSetError, IdxFormatError,
                         ModelFormatError, MutationToolkitError, TrainingDivergenceError)
from util.LogUtil import LogUtil

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nnmutate", description="mutation testing for neural network classifiers")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=Constant.CONFIG_PATH, help="YAML configuration file")
    for f in fields(RunConfig):
        kind = ConfigUtil.field_type(f.name)
        if kind is list:
            common.add_argument(f"--{f.name}", nargs="+", default=None)
        else:
            common.add_argument(f"--{f.name}", default=None, metavar=kind.__name__.upper())

    commands = parser.add_subparsers(dest="command", required=True)
    commands.add_parser("train", parents=[common], help="train the original model")
    mutate = commands.add_parser("mutate", parents=[common], help="generate mutants")
    mutate.add_argument("--level", choices=("source", "model"), required=True)
    commands.add_parser("evaluate", parents=[common], help="score the test data against the mutants")
    commands.add_parser("experiment", parents=[common], help="uniform vs non-uniform sampling experiment")
    commands.add_parser("report", parents=[common], help="re-render the report from a saved kill matrix")
    return parser


def exit_code(error: BaseException) -> int:
    if isinstance(error, ConfigError):
        return Constant.EXIT_CONFIG_ERROR
    if isinstance(error, TrainingDivergenceError):
        return Constant.EXIT_DIVERGENCE
    if isinstance(error, EmptyPassedSetError):
        return Constant.EXIT_EMPTY_PASSED
    if isinstance(error, EmptyMutantSetError):
        return Constant.EXIT_EMPTY_MUTANTS
    if isinstance(error, (OSError, ModelFormatError, IdxFormatError, DatasetError)):
        return Constant.EXIT_IO_ERROR
    return Constant.EXIT_CONFIG_ERROR


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig)}
    try:
        config = ConfigUtil.load_run_config(args.config, overrides)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return Constant.EXIT_CONFIG_ERROR
    LogUtil.setup(config.log_level)

    pipeline = PipelineService(config)
    try:
        if args.command == "train":
            pipeline.cmd_train()
        elif args.command == "mutate":
            pipeline.cmd_mutate(args.level)
        elif args.command == "evaluate":
            pipeline.cmd_evaluate()
        elif args.command == "experiment":
            pipeline.cmd_experiment()
        else:
            pipeline.cmd_report()
    except (MutationToolkitError, OSError) as e:
        logger.error("%s failed: %s", args.command, e)
        return exit_code(e)
    return Constant.EXIT_OK


if __name__ == '__main__':
    sys.exit(main())
