#
# coca3d.gradcheck.py
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
import coca3d.tensor as T
from collections import OrderedDict
from typing import Callable
from typing import Dict
from coca3d.evaluate import Box3D
from coca3d.model import CoCa3D
from coca3d.pointcloud import PointCloud
from coca3d.seeding import derive
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor
from coca3d.text import BOS
from coca3d.text import CLS
from coca3d.text import EOS
from coca3d.text import SPECIALS
from coca3d.text import TextBatch
from coca3d.text import encode_text


__all__ = [
    "EPSILON",
    "TOLERANCE",
    "GradcheckReport",
    "check_gradients",
    "tiny_config",
    "gradcheck",
]


# Get the logger
logger = logging.getLogger(__name__)


# The central difference step
EPSILON = 1e-5

# The largest accepted relative error
TOLERANCE = 1e-4

# Gradients below this are compared absolutely
FLOOR = 1e-5

# The tiny model vocabulary size
TINY_VOCAB_SIZE = 20


class GradcheckReport(object):
    """
    The result of a gradient check

    """

    def __init__(self):
        self.max_rel_err = 0.0
        self.worst = None
        self.checked = 0
        self.skipped = 0
        self.per_parameter: Dict[str, float] = OrderedDict()

    @property
    def passed(self) -> bool:
        return self.max_rel_err <= TOLERANCE

    def __str__(self) -> str:
        return (
            "max rel. err %.3e (%s) over %d entries, %d skipped at kinks"
            % (self.max_rel_err, self.worst, self.checked, self.skipped)
        )


def check_gradients(
    loss_fn: Callable[[], Tensor],
    parameters: Dict[str, Parameter],
    eps: float = EPSILON,
) -> GradcheckReport:
    """
    Compare the analytic gradient of a scalar loss with central differences

    The relative error of each entry is |a - n| / max(|a|, |n|, 1e-5). An
    entry whose perturbed forward passes take a different branch of a
    piecewise operation (a relu, max or smooth L1 kink, or a change of
    matching) is skipped, since the function is not differentiable there.

    Args:
        loss_fn: Recomputes the loss from the current parameter values
        parameters: The parameters to check, keyed by name
        eps: The central difference step

    Returns:
        The report

    """
    for p in parameters.values():
        p.zero_grad()
    loss_fn().backward()
    analytic = {
        name: np.zeros_like(p.data) if p.grad is None else np.copy(p.grad)
        for name, p in parameters.items()
    }

    def evaluate():
        with T.no_grad(), T.branch_trace() as branches:
            value = loss_fn().item()
        return value, list(branches)

    _, reference = evaluate()
    report = GradcheckReport()
    for name, p in parameters.items():
        flat = p.data.reshape(-1)
        grad = analytic[name].reshape(-1)
        worst = 0.0
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + eps
            plus, plus_branches = evaluate()
            flat[i] = original - eps
            minus, minus_branches = evaluate()
            flat[i] = original
            if plus_branches != reference or minus_branches != reference:
                report.skipped += 1
                continue
            numeric = (plus - minus) / (2 * eps)
            err = abs(grad[i] - numeric) / max(abs(grad[i]), abs(numeric), FLOOR)
            report.checked += 1
            worst = max(worst, err)
            if err > report.max_rel_err:
                report.max_rel_err = err
                report.worst = "%s[%d]" % (name, i)
        report.per_parameter[name] = worst
        logger.debug("    %s: max rel. err %.3e" % (name, worst))
    return report


def tiny_config(seed: int = 0) -> coca3d.config.Config:
    """
    The configuration of the tiny model: 8 patches, 2 task tokens, one
    layer encoders and decoder, with the box head on

    """
    return coca3d.config.load(
        {
            "model": {
                "point_tokenizer": {
                    "num_patches": 8,
                    "group_size": 4,
                    "embed_dim": 8,
                    "hidden_dim": 8,
                },
                "scene_encoder": {
                    "layers": 1,
                    "heads": 2,
                    "model_dim": 8,
                    "mlp_ratio": 2,
                    "task_tokens": 2,
                },
                "text_encoder": {
                    "layers": 1,
                    "heads": 2,
                    "model_dim": 8,
                    "mlp_ratio": 2,
                    "max_len": 8,
                },
                "contrastive": {"shared_dim": 8, "init_temperature": 0.5},
                "decoder": {
                    "layers": 1,
                    "heads": 2,
                    "model_dim": 8,
                    "mlp_ratio": 2,
                    "max_decode_len": 8,
                },
                "box_head": {"enabled": True, "hidden_dim": 8},
            },
            "training": {"batch_size": 2},
            "seed": seed,
        }
    )


def gradcheck(seed: int = 0, eps: float = EPSILON) -> GradcheckReport:
    """
    Check the gradient of the total loss of the tiny model with respect to
    every trainable parameter on a random batch of two scenes

    Args:
        seed: The seed for the model and the batch
        eps: The central difference step

    Returns:
        The report

    """
    config = tiny_config(seed)
    model = CoCa3D(config, None, vocab_size=TINY_VOCAB_SIZE)
    rng = derive(seed, "gradcheck")

    # Spread the box slots so the matching has no ties
    weight = model.box_head.mlp.layer2.weight
    weight.data[...] = rng.normal(0, 0.5, size=weight.shape)

    # A random batch
    clouds = [PointCloud(rng.uniform(-1, 1, size=(24, 7))) for _ in range(2)]
    grouped = [model.group(c) for c in clouds]
    groups = np.stack([g for g, _ in grouped])
    centers = np.stack([c for _, c in grouped])
    words = rng.integers(len(SPECIALS), TINY_VOCAB_SIZE, size=(2, 2))
    with T.no_grad():
        text_features = encode_text(
            TextBatch.from_ids([[CLS, BOS, *w, EOS] for w in words.tolist()]),
            model.text_backbone,
        ).data
    inputs = np.array([[BOS, *w] for w in words.tolist()])
    targets = np.array([[*w, EOS] for w in words.tolist()])
    gt_boxes = [
        [
            Box3D(
                center=tuple(rng.uniform(-1, 1, size=3)),
                size=tuple(rng.uniform(0.2, 0.5, size=3)),
            )
            for _ in range(2)
        ]
        for _ in range(2)
    ]

    def loss_fn():
        return model.compute_losses_from_ids(
            groups, centers, text_features, inputs, targets, gt_boxes
        ).l_total

    parameters = model.trainable_parameters()
    logger.info(
        "Checking %d trainable tensors (%d entries)"
        % (len(parameters), sum(p.size for p in parameters.values()))
    )
    report = check_gradients(loss_fn, parameters, eps)
    logger.info(str(report))
    return report
