#
# coca3d.seeding.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import zlib
import numpy as np
from typing import Union


__all__ = ["derive"]


def derive(seed: int, *names: Union[str, int]) -> np.random.Generator:
    """
    Get a random generator for a named sub stream of the master seed

    Names are hashed with crc32 so that the stream for e.g. ("init",
    "scene_backbone") is stable across runs and independent of the other
    streams.

    Args:
        seed: The master seed
        names: The stream path (strings or integers)

    Returns:
        The random generator

    """
    keys = [int(seed)]
    for name in names:
        if isinstance(name, str):
            keys.append(zlib.crc32(name.encode("utf-8")))
        else:
            keys.append(int(name))
    return np.random.default_rng(np.random.SeedSequence(keys))
