#
# coca3d.infer.__init__.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
from coca3d.infer._caption import *  # noqa
from coca3d.infer._retrieve import *  # noqa
