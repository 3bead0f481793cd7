#
# coca3d.box_head.py
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
import scipy.optimize
import scipy.spatial.distance
import scipy.special
import coca3d.config
import coca3d.nn
import coca3d.tensor as T
from typing import List
from typing import Sequence
from typing import Tuple
from coca3d.evaluate import Box3D
from coca3d.scene import SceneTokens
from coca3d.tensor import Tensor


__all__ = [
    "UNIT_BOX",
    "BoxHead",
    "hungarian_match",
    "decode_boxes",
    "box_loss",
    "predict_boxes",
]


# Get the logger
logger = logging.getLogger(__name__)


# The box emitted by a head whose output parameters are all zero
UNIT_BOX = Box3D(center=(0.0, 0.0, 0.0), size=(1.0, 1.0, 1.0))


class BoxHead(coca3d.nn.Module):
    """
    A two layer perceptron from each task token output to a box

    Every slot emits 7 values: the center xyz, the log-size xyz and a
    confidence logit. The output layer starts at zero weight with its bias
    set to the prior box, so the untrained head emits the prior in every
    slot with confidence 0.5.

    """

    def __init__(
        self,
        config: coca3d.config.BoxHead,
        in_dim: int,
        rng: np.random.Generator,
        prior: Box3D = None,
    ):
        self.mlp = coca3d.nn.MLP(in_dim, config.hidden_dim, 7, rng, activation="gelu")
        if prior is None:
            prior = UNIT_BOX
        self.mlp.layer2.weight.data[...] = 0
        self.mlp.layer2.bias.data[...] = np.concatenate(
            [prior.center, np.log(prior.size), [0.0]]
        )

    def forward(self, task_outputs) -> Tensor:
        """
        Args:
            task_outputs: The (..., m_t, D) task token outputs

        Returns:
            The (..., m_t, 7) raw slot outputs

        """
        return self.mlp(task_outputs)


def hungarian_match(
    predicted_centers: np.ndarray, gt_centers: np.ndarray
) -> List[Tuple[int, int]]:
    """
    Assign slots to objects minimising the summed center distance

    Returns:
        The (slot, object) pairs, min(slots, objects) of them, by slot

    """
    cost = scipy.spatial.distance.cdist(
        np.atleast_2d(predicted_centers), np.atleast_2d(gt_centers)
    )
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return sorted((int(r), int(c)) for r, c in zip(rows, cols))


def decode_boxes(raw: np.ndarray) -> List[Tuple[Box3D, float]]:
    """
    Turn the (m_t, 7) raw outputs of one scene into (box, confidence) pairs

    """
    raw = np.asarray(raw)
    return [
        (
            Box3D(
                center=tuple(float(x) for x in row[:3]),
                size=tuple(float(x) for x in np.exp(row[3:6])),
            ),
            float(scipy.special.expit(row[6])),
        )
        for row in raw
    ]


def box_loss(raw, gt_boxes: Sequence[Box3D], primary: int = 0) -> Tensor:
    """
    The box loss of one scene

    Slots are matched to the ground truth boxes by center distance. Matched
    slots regress (center, log-size) with smooth L1. The confidence is a
    binary cross-entropy whose target is 1 only for the slot matched to the
    primary object.

    Args:
        raw: The (m_t, 7) raw slot outputs
        gt_boxes: The ground truth boxes
        primary: The index of the primary object

    Returns:
        The scalar loss

    """
    raw = T.as_tensor(raw)
    if len(gt_boxes) == 0:
        raise ValueError("Need at least one ground truth box")
    gt_centers = np.array([b.center for b in gt_boxes])
    pairs = hungarian_match(raw.data[:, :3], gt_centers)
    T.record_branch(np.array(pairs))
    slots = np.array([s for s, _ in pairs])
    objects = np.array([o for _, o in pairs])

    # Regression on the matched slots
    target = np.concatenate(
        [gt_centers[objects], np.log(np.array([gt_boxes[o].size for o in objects]))],
        axis=1,
    )
    regression = T.sum(T.smooth_l1(raw[slots, :6] - target)) * (1.0 / len(pairs))

    # Confidence
    labels = np.zeros(raw.shape[0])
    labels[slots[objects == primary]] = 1.0
    logits = raw[:, 6]
    confidence = T.mean(T.softplus(logits) - logits * labels)
    return regression + confidence


def predict_boxes(scene: SceneTokens, box_head: BoxHead) -> List[Tuple[Box3D, float]]:
    """
    Predict one box and confidence per task token slot of an unbatched scene

    """
    with T.no_grad():
        raw = box_head(scene.task_outputs)
    return decode_boxes(raw.data)
