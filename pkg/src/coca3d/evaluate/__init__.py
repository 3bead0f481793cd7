#
# coca3d.evaluate.__init__.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
from coca3d.evaluate._box import *  # noqa
from coca3d.evaluate._caption import *  # noqa
from coca3d.evaluate._records import *  # noqa
from coca3d.evaluate._report import *  # noqa
