#
# coca3d.command_line.caption.py
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


__all__ = ["caption"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Caption the scenes of a split with a trained model"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.caption parser

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
        "-o",
        "--output",
        type=str,
        default="captions.jsonl",
        dest="output",
        help="The JSON lines file for the captions",
    )
    parser.add_argument(
        "--split",
        type=str,
        choices=["train", "val", "test", "all"],
        default="test",
        dest="split",
        help="The split to caption",
    )
    parser.add_argument(
        "--mode",
        type=str,
        choices=["greedy", "beam"],
        default=None,
        dest="mode",
        help="The decoding strategy",
    )
    parser.add_argument(
        "--beam-width",
        type=int,
        default=None,
        dest="beam_width",
        help="The beam width",
    )

    return parser


def caption_impl(args):
    """
    Caption the scenes

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Load the model and set the command line args
    model, _ = CoCa3D.load(args.model)
    generation = model.config.generation.model_dump()
    if args.mode is not None:
        generation["mode"] = args.mode
    if args.beam_width is not None:
        generation["beam_width"] = args.beam_width
    generation = coca3d.config.Generation(**generation)

    # Print some options
    logger.info("\n" + coca3d.config.show(model.config, full=True))
    logger.info("\n" + coca3d.config.show(generation, full=True))

    # Do the work
    coca3d.infer.caption(
        model,
        args.dataset,
        output=args.output,
        split=None if args.split == "all" else args.split,
        generation=generation,
    )

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def caption(args: List[str] = None):
    """
    Caption the scenes

    """
    caption_impl(get_parser().parse_args(args=args))
