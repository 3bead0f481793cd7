from coca3d.command_line.config._new import *  # noqa
from coca3d.command_line.config._edit import *  # noqa
from coca3d.command_line.config._show import *  # noqa
