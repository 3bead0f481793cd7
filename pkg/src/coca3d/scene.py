#
# coca3d.scene.py
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
from coca3d.pointcloud import PatchTokens
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor


__all__ = [
    "TaskTokens",
    "SceneTokens",
    "SceneBackbone",
    "encode_scene",
    "freeze_backbone",
]


# Get the logger
logger = logging.getLogger(__name__)


class TaskTokens(coca3d.nn.Module):
    """
    The learnable task tokens appended after the patch tokens

    Token j (counting from 1) starts as the constant vector filled with j so
    that every token is distinct before training.

    """

    def __init__(self, m_t: int, D_p: int):
        self.embeddings = Parameter(
            np.repeat(np.arange(1, m_t + 1, dtype=np.float64)[:, None], D_p, axis=1)
        )

    @property
    def m_t(self) -> int:
        return self.embeddings.shape[0]


class SceneTokens(object):
    """
    The encoded scene

    Attributes:
        token_outputs: The (..., M + m_t, D) transformer outputs
        global_feature: The (..., D) mean of the task token outputs
        n_patches: The number of patch tokens M

    """

    def __init__(self, token_outputs: Tensor, global_feature: Tensor, n_patches: int):
        self.token_outputs = token_outputs
        self.global_feature = global_feature
        self.n_patches = n_patches

    @property
    def task_outputs(self) -> Tensor:
        return self.token_outputs[..., self.n_patches :, :]


class SceneBackbone(coca3d.nn.Transformer):
    """
    The scene transformer. Frozen after seeded initialisation.

    """

    def __init__(self, config: coca3d.config.SceneEncoder, rng: np.random.Generator):
        super().__init__(
            config.model_dim, config.layers, config.heads, config.mlp_ratio, rng
        )


def encode_scene(
    patch_tokens: PatchTokens,
    task: TaskTokens,
    backbone: coca3d.nn.Transformer,
    adapter: coca3d.nn.Linear = None,
    positions: Tensor = None,
) -> SceneTokens:
    """
    Run the scene transformer over [patch tokens; task tokens]

    Args:
        patch_tokens: The (M, D_p) or (B, M, D_p) patch tokens
        task: The task tokens
        backbone: The (frozen) transformer
        adapter: The optional D_p -> D linear map
        positions: The optional (M + m_t, D) positional embeddings

    Returns:
        The scene tokens

    """
    x = T.as_tensor(patch_tokens.embeddings)
    batched = x.ndim == 3
    if not batched:
        x = x.reshape(1, *x.shape)
    B, M, D_p = x.shape
    if task.embeddings.shape[1] != D_p:
        raise ValueError(
            "Task token width %d does not match patch width %d"
            % (task.embeddings.shape[1], D_p)
        )

    # Append the task tokens to every scene of the batch
    tokens = T.broadcast_to(task.embeddings, (B, task.m_t, D_p))
    x = T.concat([x, tokens], axis=1)

    # Map to the backbone width
    if adapter is not None:
        x = adapter(x)
    elif D_p != backbone.dim:
        raise ValueError(
            "Patch width %d does not match backbone width %d and no adapter is set"
            % (D_p, backbone.dim)
        )
    if positions is not None:
        x = x + positions

    # Run the transformer and pool the task tokens
    out = backbone(x)
    global_feature = T.mean(out[:, M:, :], axis=1)
    if not batched:
        out = out.reshape(out.shape[1:])
        global_feature = global_feature.reshape(global_feature.shape[1:])
    return SceneTokens(out, global_feature, M)


def freeze_backbone(backbone: coca3d.nn.Module):
    """
    Flag every backbone parameter as frozen. Safe to call more than once.

    """
    backbone.freeze()
    logger.debug("Froze %d backbone parameters" % len(backbone.parameters()))
