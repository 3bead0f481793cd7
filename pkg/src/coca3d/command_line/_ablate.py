#
# coca3d.command_line.ablate.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#


import logging
import time
import coca3d.command_line
import coca3d.config
import coca3d.train
from argparse import ArgumentParser
from typing import List


__all__ = ["ablate"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Sweep the loss balance weight over several seeds"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.ablate parser

    """

    # Initialise the parser
    if parser is None:
        parser = ArgumentParser(description=get_description())

    # Add some command line arguments
    parser.add_argument(
        "-c",
        "--config",
        type=str,
        default=None,
        dest="config",
        help="The yaml file to configure the runs",
    )
    parser.add_argument(
        "-d",
        "--dataset",
        type=str,
        default="dataset",
        dest="dataset",
        help="The dataset directory",
    )
    parser.add_argument(
        "-o",
        "--output",
        type=str,
        default="ablation",
        dest="output",
        help="The directory for the runs and the ablation table",
    )
    parser.add_argument(
        "--lambdas",
        type=coca3d.command_line.float_list,
        default=list(coca3d.train.DEFAULT_LAMBDAS),
        dest="lambdas",
        help="The comma separated lambda values",
    )
    parser.add_argument(
        "--seeds",
        type=coca3d.command_line.int_list,
        default=[0, 1, 2],
        dest="seeds",
        help="The comma separated seeds",
    )
    parser.add_argument(
        "--steps",
        type=int,
        default=None,
        dest="steps",
        help="The number of optimizer steps per run",
    )
    parser.add_argument(
        "--split",
        type=str,
        choices=["train", "val", "test"],
        default="test",
        dest="split",
        help="The split to caption and score",
    )

    return parser


def ablate_impl(args):
    """
    Run the ablation

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Load the configuration
    config = coca3d.config.load(args.config)
    if args.steps is not None:
        config.training.max_steps = args.steps
        config = coca3d.config.load(config.model_dump(mode="json", by_alias=True))

    # Print some options
    logger.info("\n" + coca3d.config.show(config, full=True))

    # Do the work
    table = coca3d.train.ablate(
        config,
        args.dataset,
        args.output,
        lambdas=args.lambdas,
        seeds=args.seeds,
        split=args.split,
    )
    print(table.to_string(index=False))

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def ablate(args: List[str] = None):
    """
    Run the ablation

    """
    ablate_impl(get_parser().parse_args(args=args))
