#
# coca3d.train._optimizer.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import logging
import numpy as np
import coca3d.config
from collections import OrderedDict
from math import cos
from math import pi
from typing import Dict
from coca3d.tensor import Parameter


__all__ = ["cosine_lr", "AdamW"]


# Get the logger
logger = logging.getLogger(__name__)


def cosine_lr(step: int, total_steps: int, peak: float, min_ratio: float) -> float:
    """
    The cosine annealed learning rate

    Runs from peak at step 0 to min_ratio * peak at the final step
    (total_steps - 1) and is flat after it.

    """
    if total_steps <= 1:
        return peak
    t = min(step, total_steps - 1) / (total_steps - 1)
    floor = min_ratio * peak
    return floor + 0.5 * (peak - floor) * (1 + cos(pi * t))


class AdamW(object):
    """
    Adam with decoupled weight decay over the non frozen parameters

    Frozen parameters are never touched, whatever their grad holds.

    """

    def __init__(self, parameters: Dict[str, Parameter], config: coca3d.config.Training):
        self.parameters = OrderedDict(
            (name, p) for name, p in parameters.items() if not p.frozen
        )
        self.beta1 = config.beta1
        self.beta2 = config.beta2
        self.eps = config.eps
        self.weight_decay = config.weight_decay
        self.step_count = 0
        self.m = {name: np.zeros_like(p.data) for name, p in self.parameters.items()}
        self.v = {name: np.zeros_like(p.data) for name, p in self.parameters.items()}

    def step(self, lr: float):
        self.step_count += 1
        t = self.step_count
        for name, p in self.parameters.items():
            if p.grad is None:
                continue
            g = p.grad
            self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = self.m[name] / (1 - self.beta1**t)
            v_hat = self.v[name] / (1 - self.beta2**t)
            p.data[...] = p.data - lr * (
                m_hat / (np.sqrt(v_hat) + self.eps) + self.weight_decay * p.data
            )

    def state_records(self) -> Dict[str, tuple]:
        """
        The optimizer state as checkpoint records

        """
        records = OrderedDict()
        records["optimizer.step"] = (np.array(float(self.step_count)), False)
        for name in self.parameters:
            records["optimizer.m." + name] = (self.m[name], False)
            records["optimizer.v." + name] = (self.v[name], False)
        return records

    def load_state_records(self, records: Dict[str, tuple]):
        if "optimizer.step" not in records:
            raise RuntimeError("Checkpoint has no optimizer state")
        self.step_count = int(records["optimizer.step"][0])
        for name in self.parameters:
            self.m[name] = np.array(records["optimizer.m." + name][0], dtype=np.float64)
            self.v[name] = np.array(records["optimizer.v." + name][0], dtype=np.float64)
