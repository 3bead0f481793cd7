#
# coca3d.command_line.datagen.py
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
import coca3d.data
from argparse import ArgumentParser
from typing import List


__all__ = ["datagen"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Generate the synthetic desk scenes"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.datagen parser

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
        help="The yaml file to configure the dataset",
    )
    parser.add_argument(
        "-o",
        "--output",
        type=str,
        default="dataset",
        dest="output",
        help="The output directory for the scenes",
    )
    parser.add_argument(
        "-n",
        "--count",
        type=int,
        default=None,
        dest="count",
        help="The number of scenes",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        dest="seed",
        help="The master random seed",
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
        "--cluster.max_workers",
        type=int,
        default=None,
        dest="cluster_max_workers",
        help="The maximum number of worker processes",
    )

    return parser


def datagen_impl(args):
    """
    Generate the synthetic desk scenes

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Do the work
    coca3d.data.generate_dataset(
        args.config,
        args.output,
        count=args.count,
        seed=args.seed,
        cluster_method=args.cluster_method,
        cluster_max_workers=args.cluster_max_workers,
    )

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def datagen(args: List[str] = None):
    """
    Generate the synthetic desk scenes

    """
    datagen_impl(get_parser().parse_args(args=args))
