#
# coca3d.contrastive.py
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
import coca3d.nn
import coca3d.tensor as T
from math import log
from typing import Sequence
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor


__all__ = [
    "DegenerateNormError",
    "ProjectionHead",
    "ContrastiveState",
    "l2_normalize",
    "project_and_normalize",
    "similarity_matrix",
    "info_nce",
    "retrieval_top1",
]


# Get the logger
logger = logging.getLogger(__name__)


# Norms below this are degenerate
MIN_NORM = 1e-12

# Tolerance on the unit norm of similarity inputs
UNIT_TOLERANCE = 1e-9


class DegenerateNormError(ValueError):
    """
    Raised when a vector is too short to normalize

    """

    pass


class ProjectionHead(coca3d.nn.Module):
    """
    Linear, ReLU, Linear into the shared space

    """

    def __init__(self, in_dim: int, shared_dim: int, rng: np.random.Generator):
        self.layer1 = coca3d.nn.Linear(in_dim, shared_dim, rng)
        self.layer2 = coca3d.nn.Linear(shared_dim, shared_dim, rng)

    @property
    def in_dim(self) -> int:
        return self.layer1.in_dim

    @property
    def out_dim(self) -> int:
        return self.layer2.out_dim

    def forward(self, x) -> Tensor:
        return self.layer2(T.relu(self.layer1(x)))


class ContrastiveState(coca3d.nn.Module):
    """
    The learnable temperature, stored as its logarithm

    """

    def __init__(self, config: coca3d.config.Contrastive):
        self.log_temperature = Parameter(np.array(log(config.init_temperature)))
        self.min_temperature = config.min_temperature
        self.max_temperature = config.max_temperature
        self.symmetric = config.symmetric

    @property
    def temperature(self) -> Tensor:
        return T.exp(self.log_temperature)

    def clamp(self):
        """
        Clamp the temperature to [min, max] in place

        """
        self.log_temperature.data[...] = np.clip(
            self.log_temperature.data,
            log(self.min_temperature),
            log(self.max_temperature),
        )


def l2_normalize(x, axis: int = -1) -> Tensor:
    """
    Scale each vector to unit length

    Raises:
        DegenerateNormError: if any vector has norm below 1e-12

    """
    x = T.as_tensor(x)
    norm = T.sqrt(T.sum(x * x, axis=axis, keepdims=True))
    if np.any(norm.data < MIN_NORM):
        raise DegenerateNormError(
            "Cannot normalize a vector with norm %g" % float(norm.data.min())
        )
    return x / norm


def project_and_normalize(f, head: ProjectionHead = None) -> Tensor:
    """
    Project the features into the shared space and normalize them

    Args:
        f: The (..., D) features
        head: The projection head (None is the identity)

    Returns:
        The unit length (..., D_s) embeddings

    """
    f = T.as_tensor(f)
    if head is not None:
        if f.shape[-1] != head.in_dim:
            raise ValueError(
                "Feature width %d does not match projection width %d"
                % (f.shape[-1], head.in_dim)
            )
        f = head(f)
    return l2_normalize(f)


def similarity_matrix(scene_feats, text_feats) -> Tensor:
    """
    The cosine similarity of every scene with every text

    Args:
        scene_feats: The (N, D_s) unit scene embeddings
        text_feats: The (N, D_s) unit text embeddings

    Returns:
        The (N, N) similarity matrix

    """
    scene_feats = T.as_tensor(scene_feats)
    text_feats = T.as_tensor(text_feats)
    for name, feats in [("scene", scene_feats), ("text", text_feats)]:
        norms = np.linalg.norm(feats.data, axis=-1)
        if np.any(np.abs(norms - 1) > UNIT_TOLERANCE):
            raise ValueError("%s features are not unit norm" % name)
    return T.matmul(scene_feats, T.transpose(text_feats))


def info_nce(sim, temperature, symmetric: bool = False) -> Tensor:
    """
    The InfoNCE loss of matching scene i with text i

    The loss is -mean_i log softmax_j(sim[i, j] / tau)[i]. With symmetric set
    the text to scene direction is added and the two are averaged.

    Args:
        sim: The (N, N) similarity matrix
        temperature: The temperature tau (a float or scalar tensor)
        symmetric: Average with the column direction

    Returns:
        The scalar loss

    """
    sim = T.as_tensor(sim)
    if sim.ndim != 2 or sim.shape[0] != sim.shape[1]:
        raise ValueError("Similarity matrix must be square, got %s" % (sim.shape,))
    diagonal = (np.arange(sim.shape[0]), np.arange(sim.shape[0]))
    logits = sim / temperature
    loss = -T.mean(T.log_softmax(logits, axis=1)[diagonal])
    if symmetric:
        loss = 0.5 * (loss - T.mean(T.log_softmax(logits, axis=0)[diagonal]))
    return loss


def retrieval_top1(sim, keys: Sequence = None) -> float:
    """
    The fraction of scenes whose most similar text is their own

    The argmax takes the lowest index among ties. When keys are given a
    retrieval is also correct if the retrieved text has the same key as the
    true one (e.g. an identical caption).

    """
    sim = sim.data if isinstance(sim, Tensor) else np.asarray(sim)
    predicted = np.argmax(sim, axis=1)
    if keys is None:
        correct = predicted == np.arange(len(predicted))
    else:
        correct = np.array([keys[p] == keys[i] for i, p in enumerate(predicted)])
    return float(np.mean(correct))
