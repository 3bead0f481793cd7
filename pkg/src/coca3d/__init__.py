#
# coca3d.__init__.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#


try:
    from coca3d._version import version as __version__
except ImportError:
    __version__ = "unknown"


from coca3d._run import run  # noqa
