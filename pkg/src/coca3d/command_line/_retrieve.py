#
# coca3d.command_line.retrieve.py
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
import coca3d.infer
from argparse import ArgumentParser
from typing import List
from coca3d.model import CoCa3D


__all__ = ["retrieve"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Measure the top-1 scene to text retrieval accuracy"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.retrieve parser

    """

    # Initialise the parser
    if parser is None:
        parser = ArgumentParser(description=get_description())

    # Add some command line arguments
    parser.add_argument(
        "-m",
        "--model",
        type=str,
        default="model",
        dest="model",
        help="The training directory of the model",
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
        "--split",
        type=str,
        choices=["train", "val", "test", "all"],
        default="train",
        dest="split",
        help="The split to retrieve over",
    )
    parser.add_argument(
        "--batch-size",
        type=int,
        default=None,
        dest="batch_size",
        help="The retrieval batch size (default the training batch size)",
    )

    return parser


def retrieve_impl(args):
    """
    Measure the retrieval accuracy

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Load the model
    model, _ = CoCa3D.load(args.model)

    # Print some options
    logger.info("\n" + coca3d.config.show(model.config, full=True))

    # Do the work
    accuracy = coca3d.infer.retrieve(
        model,
        args.dataset,
        split=None if args.split == "all" else args.split,
        batch_size=args.batch_size,
    )
    print("retrieval_top1: %.4f" % accuracy)

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def retrieve(args: List[str] = None):
    """
    Measure the retrieval accuracy

    """
    retrieve_impl(get_parser().parse_args(args=args))
