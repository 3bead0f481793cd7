#
# coca3d.command_line.main.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#


import logging
import sys
import coca3d.command_line
from coca3d.command_line import _ablate
from coca3d.command_line import _caption
from coca3d.command_line import _datagen
from coca3d.command_line import _eval
from coca3d.command_line import _gradcheck
from coca3d.command_line import _retrieve
from coca3d.command_line import _run
from coca3d.command_line import _train
from coca3d.command_line import config as config
from argparse import ArgumentParser
from typing import List


__all__ = ["main"]


# Get the logger
logger = logging.getLogger(__name__)


# The exit codes
EXIT_SUCCESS = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


# The stage sub commands
COMMANDS = {
    "datagen": _datagen,
    "train": _train,
    "caption": _caption,
    "retrieve": _retrieve,
    "eval": _eval,
    "gradcheck": _gradcheck,
    "ablate": _ablate,
    "run": _run,
}


# The implementation of each stage sub command
IMPLEMENTATIONS = {
    "datagen": _datagen.datagen_impl,
    "train": _train.train_impl,
    "caption": _caption.caption_impl,
    "retrieve": _retrieve.retrieve_impl,
    "eval": _eval.evaluate_impl,
    "gradcheck": _gradcheck.gradcheck_impl,
    "ablate": _ablate.ablate_impl,
    "run": _run.run_impl,
}


def add_config_command(parser: ArgumentParser):
    """
    Add the config sub command

    """

    # Add some sub commands
    subparsers = parser.add_subparsers(
        dest="config_command", help="The coca3d config sub commands"
    )

    # Add the config commands
    config._new.get_parser(
        subparsers.add_parser("new", help=config._new.get_description())
    )
    config._edit.get_parser(
        subparsers.add_parser("edit", help=config._edit.get_description())
    )
    config._show.get_parser(
        subparsers.add_parser("show", help=config._show.get_description())
    )

    # Return parser
    return parser


def get_parser() -> ArgumentParser:
    """
    Get the parser for the coca3d command

    """

    # Create the argument parser
    parser = ArgumentParser(
        description="coca3d: contrastive captioning of synthetic 3D desk scenes"
    )

    # Add some sub commands
    subparsers = parser.add_subparsers(dest="command", help="The coca3d sub commands")

    # Add the "coca3d config" command
    add_config_command(
        subparsers.add_parser(
            "config", help="Commands to manipulate configuration files"
        )
    )

    # Add the stage commands
    for name, module in COMMANDS.items():
        module.get_parser(subparsers.add_parser(name, help=module.get_description()))

    # Return parser
    return parser


def config_main(parser, args):
    """
    Perform the coca3d config action

    """
    if args.config_command is None:
        parser.print_help()
        raise coca3d.command_line.UsageError("Missing config sub command")
    {
        "new": config._new.new_impl,
        "edit": config._edit.edit_impl,
        "show": config._show.show_impl,
    }[args.config_command](args)


def get_subparser(parser, command):
    """
    Helper function to get the relevant sub parser

    """
    if command is None:
        return None
    for sp in parser._subparsers._group_actions:
        p = sp.choices.get(command, None)
        if p is not None:
            return p
    raise RuntimeError("Parser for %s not found" % command)


def main_impl(parser, args):
    """
    coca3d as a single command line program

    """
    if args.command is None:
        parser.print_help()
        raise coca3d.command_line.UsageError("Missing sub command")
    if args.command == "config":
        config_main(get_subparser(parser, args.command), args)
    else:
        IMPLEMENTATIONS[args.command](args)


def main(args: List[str] = None) -> int:
    """
    coca3d as a single command line program

    Returns:
        0 on success, 1 for a usage error and 2 when the command fails

    """

    # Get the parser
    parser = get_parser()

    # Parse the arguments
    try:
        parsed = parser.parse_args(args)
    except SystemExit as e:
        return EXIT_SUCCESS if e.code in (0, None) else EXIT_USAGE

    # Do the work
    try:
        main_impl(parser, parsed)
    except coca3d.command_line.UsageError as e:
        print("Usage error: %s" % e, file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:
        logger.debug("Command failed", exc_info=True)
        print("Error: %s" % e, file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_SUCCESS
