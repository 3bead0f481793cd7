#
# coca3d.command_line.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import logging
import logging.config
import os
from coca3d.command_line._datagen import *  # noqa
from coca3d.command_line._train import *  # noqa
from coca3d.command_line._caption import *  # noqa
from coca3d.command_line._retrieve import *  # noqa
from coca3d.command_line._eval import *  # noqa
from coca3d.command_line._gradcheck import *  # noqa
from coca3d.command_line._ablate import *  # noqa
from coca3d.command_line._run import *  # noqa
from coca3d.command_line._main import *  # noqa

# Get the logger
logger = logging.getLogger(__name__)


# The environment variable that sets the log level
LOG_ENV = "C3CA_LOG"

# The accepted log levels
LOG_LEVELS = {"error": "ERROR", "info": "INFO", "debug": "DEBUG"}


class UsageError(Exception):
    """
    A bad command line or environment

    """

    pass


def configure_logging():
    """
    Configure the logging

    The level is read from C3CA_LOG (error, info or debug; default info)

    """
    name = os.environ.get(LOG_ENV, "info").strip().lower()
    if name not in LOG_LEVELS:
        raise UsageError(
            "%s must be one of %s, got '%s'"
            % (LOG_ENV, ", ".join(LOG_LEVELS.keys()), name)
        )

    logging.config.dictConfig(
        {
            "version": 1,
            "disable_existing_loggers": True,
            "handlers": {
                "stream": {
                    "level": "DEBUG",
                    "class": "logging.StreamHandler",
                    "stream": "ext://sys.stdout",
                }
            },
            "loggers": {
                "coca3d": {
                    "handlers": ["stream"],
                    "level": LOG_LEVELS[name],
                    "propagate": True,
                }
            },
        }
    )


def float_list(value: str) -> list:
    """
    Parse a comma separated list of floats, e.g. "0.25,0.5"

    """
    try:
        return [float(x) for x in value.split(",") if x.strip()]
    except ValueError:
        raise ValueError("Expected a comma separated list of numbers: %s" % value)


def str_list(value: str) -> list:
    return [x.strip() for x in value.split(",") if x.strip()]


def int_list(value: str) -> list:
    return [int(x) for x in value.split(",") if x.strip()]
