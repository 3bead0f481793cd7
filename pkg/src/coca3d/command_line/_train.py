#
# coca3d.command_line.train.py
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
import coca3d.train
from argparse import ArgumentParser
from typing import List


__all__ = ["train"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Train the contrastive captioning model"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.train parser

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
        help="The yaml file to configure the model and training",
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
        help="The training directory for the checkpoint and metrics",
    )
    parser.add_argument(
        "--lambda",
        type=float,
        default=None,
        dest="lambda_",
        help="The loss balance weight",
    )
    parser.add_argument(
        "--lr",
        type=float,
        default=None,
        dest="learning_rate",
        help="The peak learning rate",
    )
    parser.add_argument(
        "--batch-size",
        type=int,
        default=None,
        dest="batch_size",
        help="The batch size",
    )
    parser.add_argument(
        "--steps",
        type=int,
        default=None,
        dest="steps",
        help="The number of optimizer steps (overrides the epochs)",
    )
    parser.add_argument(
        "--seed",
        type=int,
        default=None,
        dest="seed",
        help="The master random seed",
    )
    parser.add_argument(
        "--resume",
        action="store_true",
        default=False,
        dest="resume",
        help="Continue from the checkpoint in the output directory",
    )

    return parser


def train_impl(args):
    """
    Train the model

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Do the work
    coca3d.train.train(
        args.config,
        args.dataset,
        args.output,
        lambda_=args.lambda_,
        learning_rate=args.learning_rate,
        batch_size=args.batch_size,
        steps=args.steps,
        seed=args.seed,
        resume=args.resume,
    )

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def train(args: List[str] = None):
    """
    Train the model

    """
    train_impl(get_parser().parse_args(args=args))
