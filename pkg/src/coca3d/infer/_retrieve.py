#
# coca3d.infer._retrieve.py
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
import coca3d.tensor as T
from typing import Sequence
from typing import Union
from coca3d.contrastive import project_and_normalize
from coca3d.contrastive import retrieval_top1
from coca3d.contrastive import similarity_matrix
from coca3d.data import Scene
from coca3d.data import SceneDataset
from coca3d.model import CoCa3D


__all__ = ["batch_similarity", "retrieve"]


# Get the logger
logger = logging.getLogger(__name__)


def batch_similarity(model: CoCa3D, scenes: Sequence[Scene], captions: Sequence[str]):
    """
    The scene to text similarity matrix of a batch

    """
    with T.no_grad():
        tokens = model.encode_scenes([s.cloud for s in scenes])
        z_v = project_and_normalize(tokens.global_feature, model.proj_v)
        z_t = project_and_normalize(model.encode_texts(captions), model.proj_t)
        return similarity_matrix(z_v, z_t)


def retrieve(
    model: Union[str, CoCa3D],
    dataset: Union[str, SceneDataset],
    split: str = "train",
    batch_size: int = None,
) -> float:
    """
    The top-1 scene to text retrieval accuracy over consecutive batches

    A retrieved caption identical to the true one counts as correct.

    Args:
        model: The model or its training directory
        dataset: The dataset or its directory
        split: The split (None for all scenes)
        batch_size: The batch size (default the training batch size)

    Returns:
        The accuracy averaged over scenes

    """
    if isinstance(model, str):
        model, _ = CoCa3D.load(model)
    if isinstance(dataset, str):
        dataset = SceneDataset(dataset)
    if batch_size is None:
        batch_size = model.config.training.batch_size
    if batch_size < 1:
        raise ValueError("batch_size must be >= 1, got %d" % batch_size)
    scenes = dataset.scenes(split)
    if len(scenes) == 0:
        raise ValueError("No scenes in split %s" % split)
    correct = []
    for start in range(0, len(scenes), batch_size):
        batch = scenes[start : start + batch_size]
        captions = [s.caption for s in batch]
        accuracy = retrieval_top1(batch_similarity(model, batch, captions), captions)
        logger.debug("Batch %d: top-1 %.3f" % (start // batch_size, accuracy))
        correct.append(accuracy * len(batch))
    accuracy = float(np.sum(correct) / len(scenes))
    logger.info("Top-1 retrieval accuracy: %.4f" % accuracy)
    return accuracy
