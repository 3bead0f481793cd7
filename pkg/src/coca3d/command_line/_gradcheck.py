#
# coca3d.command_line.gradcheck.py
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
import coca3d.gradcheck
from argparse import ArgumentParser
from typing import List


__all__ = ["gradcheck"]


# Get the logger
logger = logging.getLogger(__name__)


def get_description():
    """
    Get the program description

    """
    return "Check the analytic gradients of a tiny model by finite differences"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the coca3d.gradcheck parser

    """

    # Initialise the parser
    if parser is None:
        parser = ArgumentParser(description=get_description())

    # Add some command line arguments
    parser.add_argument(
        "--seed",
        type=int,
        default=0,
        dest="seed",
        help="The seed for the tiny model and batch",
    )
    parser.add_argument(
        "--eps",
        type=float,
        default=coca3d.gradcheck.EPSILON,
        dest="eps",
        help="The central difference step",
    )

    return parser


def gradcheck_impl(args):
    """
    Check the gradients

    """

    # Get the start time
    start_time = time.time()

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Print some options
    logger.info(
        "\n" + coca3d.config.show(coca3d.gradcheck.tiny_config(args.seed), full=True)
    )

    # Do the work
    report = coca3d.gradcheck.gradcheck(args.seed, args.eps)
    print("max rel. err: %.3e" % report.max_rel_err)
    if not report.passed:
        raise RuntimeError(
            "Gradient check failed: %s exceeds %g"
            % (report, coca3d.gradcheck.TOLERANCE)
        )

    # Print output
    logger.info("Time taken: %.1f seconds" % (time.time() - start_time))


def gradcheck(args: List[str] = None):
    """
    Check the gradients

    """
    gradcheck_impl(get_parser().parse_args(args=args))
