#
# coca3d.evaluate._box.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import numpy as np
from pydantic import Field
from pydantic import field_validator
from typing import Tuple
from coca3d.config import BaseModel


__all__ = ["Box3D", "iou3d"]


class Box3D(BaseModel):
    """
    An axis aligned box

    """

    center: Tuple[float, float, float] = Field(description="The box center (m)")

    size: Tuple[float, float, float] = Field(description="The box extents (m)")

    @field_validator("size")
    @classmethod
    def check_size(cls, size):
        if any(not (s > 0) for s in size):
            raise ValueError("Box sizes must be > 0, got %s" % (size,))
        return size

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - 0.5 * np.asarray(self.size)

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + 0.5 * np.asarray(self.size)

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))


def iou3d(a: Box3D, b: Box3D) -> float:
    """
    The intersection volume over the union volume of two boxes

    """
    overlap = np.clip(np.minimum(a.upper, b.upper) - np.maximum(a.lower, b.lower), 0, None)
    intersection = float(np.prod(overlap))
    if intersection <= 0:
        return 0.0
    return intersection / (a.volume + b.volume - intersection)
