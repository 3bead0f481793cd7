#
# coca3d.command_line.config.edit.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#


import logging
import yaml
import coca3d.config
import coca3d.command_line
from argparse import ArgumentParser
from typing import List

# Get the logger
logger = logging.getLogger(__name__)


__all__ = ["edit", "parse_assignments"]


def get_description():
    """
    Get the program description

    """
    return "Edit the configuration"


def get_parser(parser: ArgumentParser = None) -> ArgumentParser:
    """
    Get the parser for the coca3d.config.edit command

    """

    # Initialise the parser
    if parser is None:
        parser = ArgumentParser(description=get_description())

    # Add some command line arguments
    parser.add_argument(
        "-i",
        "--input",
        type=str,
        default=None,
        dest="input",
        required=True,
        help="The input yaml file",
    )
    parser.add_argument(
        "-o",
        "--output",
        type=str,
        default=None,
        dest="output",
        help="The output yaml file (default overwrite the input)",
    )
    parser.add_argument(
        "-s",
        type=str,
        default="",
        dest="config",
        help="A yaml string to merge, e.g. '{training: {batch_size: 4}}'",
    )
    parser.add_argument(
        "--set",
        type=str,
        action="append",
        default=[],
        dest="assignments",
        metavar="KEY=VALUE",
        help="Set one dotted parameter, e.g. --set training.lambda=0.5",
    )

    return parser


def parse_assignments(assignments: List[str]) -> dict:
    """
    Turn ["training.lambda=0.5", ...] into a nested dictionary

    Values are parsed as yaml so numbers, booleans and lists keep their type.

    """
    result: dict = {}
    for assignment in assignments:
        key, sep, value = assignment.partition("=")
        if not sep or not key.strip():
            raise coca3d.command_line.UsageError(
                "Expected KEY=VALUE, got '%s'" % assignment
            )
        node = result
        path = key.strip().split(".")
        for name in path[:-1]:
            node = node.setdefault(name, {})
        node[path[-1]] = yaml.safe_load(value)
    return result


def edit_impl(args):
    """
    Edit the configuration

    """

    # Configure some basic logging
    coca3d.command_line.configure_logging()

    # Merge the yaml string and the assignments
    changes = yaml.safe_load(args.config) or {}
    changes = coca3d.config.deepmerge(changes, parse_assignments(args.assignments))

    # Call internally
    config = coca3d.config.edit(args.input, args.output, changes)

    # Print the config
    print(coca3d.config.show(config, full=True))


def edit(args: List[str] = None):
    """
    Edit the configuration

    """
    edit_impl(get_parser().parse_args(args=args))
