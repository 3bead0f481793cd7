#
# coca3d.command_line.run.py
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
import coca3d
import coca3d.command_line
from argparse import ArgumentParser
from typing import List


__all__ = ["run"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Run the full experiment: generate, train, caption and evaluate"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.run parser

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
        help="The yaml file to configure the experiment",
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
        default="model",
        dest="output",
        help="The directory for the model, captions and report",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        dest="seed",
        help="The master random seed",
    )
    parser.add_argument(
        "--split",
        type=str,
        choices=["train", "val", "test"],
        default="test",
        dest="split",
        help="The split to caption and evaluate",
    )
    parser.add_argument(
        "--cluster.max_workers",
        type=int,
        default=None,
        dest="cluster_max_workers",
        help="The maximum number of worker processes",
    )
    parser.add_argument(
        "--cluster.method",
        type=str,
        choices=["local"],
        default=None,
        dest="cluster_method",
        help="The cluster method to use",
    )
    parser.add_argument(
        "--steps",
        type=str,
        choices=["all", "datagen", "train", "caption", "eval"],
        nargs="+",
        default=None,
        dest="steps",
        help="Which pipeline steps to run",
    )

    return parser


def run_impl(args):
    """
    Run the whole experiment

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Do the work
    report = coca3d.run(
        args.config,
        args.dataset,
        args.output,
        steps=args.steps,
        seed=args.seed,
        cluster_method=args.cluster_method,
        cluster_max_workers=args.cluster_max_workers,
        split=args.split,
    )
    if report is not None:
        print(report)

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def run(args: List[str] = None):
    """
    Run the whole experiment

    """
    run_impl(get_parser().parse_args(args=args))
