#
# coca3d.pointcloud.py
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
import scipy.spatial.distance
import coca3d.config
import coca3d.nn
import coca3d.tensor as T
from typing import Tuple
from coca3d.tensor import Tensor


__all__ = [
    "PointCloud",
    "PatchSet",
    "PatchTokens",
    "farthest_point_sample",
    "knn_group",
    "coverage_radius",
    "group_points",
    "embed_groups",
    "embed_patches",
    "PatchEmbedding",
    "PointTokenizer",
]


# Get the logger
logger = logging.getLogger(__name__)


class PointCloud(object):
    """
    An N x (3 + F) array of xyz coordinates followed by per point features

    """

    def __init__(self, points: np.ndarray, n_features: int = None):
        """
        Initialise the point cloud

        Args:
            points: The (N, 3 + F) array
            n_features: The expected feature count F

        """
        points = np.array(points, dtype=np.float64)
        if points.ndim != 2 or points.shape[1] < 3:
            raise ValueError("Points must be an (N, 3 + F) array, got %s" % (points.shape,))
        if points.shape[0] < 1:
            raise ValueError("A point cloud needs at least one point")
        if not np.all(np.isfinite(points)):
            raise ValueError("Point cloud contains non-finite values")
        if n_features is not None and points.shape[1] != 3 + n_features:
            raise ValueError(
                "Expected %d features per point, got %d"
                % (n_features, points.shape[1] - 3)
            )
        self.points = points

    @property
    def xyz(self) -> np.ndarray:
        return self.points[:, :3]

    @property
    def features(self) -> np.ndarray:
        return self.points[:, 3:]

    @property
    def n_points(self) -> int:
        return self.points.shape[0]

    @property
    def n_features(self) -> int:
        return self.points.shape[1] - 3

    def __len__(self) -> int:
        return self.n_points


class PatchSet(object):
    """
    The FPS centers and their kNN neighbourhoods

    """

    def __init__(self, center_indices: np.ndarray, neighbor_indices: np.ndarray):
        self.center_indices = np.asarray(center_indices, dtype=np.int64)
        self.neighbor_indices = np.asarray(neighbor_indices, dtype=np.int64)
        assert self.neighbor_indices.shape[0] == self.center_indices.shape[0]

    @property
    def M(self) -> int:
        return self.center_indices.shape[0]

    @property
    def K(self) -> int:
        return self.neighbor_indices.shape[1]


class PatchTokens(object):
    """
    The patch embeddings, one row per patch

    """

    def __init__(self, embeddings: Tensor):
        self.embeddings = embeddings

    @property
    def M(self) -> int:
        return self.embeddings.shape[-2]

    @property
    def D_p(self) -> int:
        return self.embeddings.shape[-1]


def farthest_point_sample(cloud: PointCloud, M: int, start_index: int = 0) -> np.ndarray:
    """
    Select M well spread patch centers by greedy max-min selection

    The first pick is start_index. Each later pick maximizes the distance to
    the nearest already selected center, with ties going to the lowest index.

    Args:
        cloud: The point cloud
        M: The number of centers
        start_index: The first center

    Returns:
        The M center indices in selection order

    """
    N = cloud.n_points
    if M < 1 or M > N:
        raise ValueError("Number of patches must be in [1, %d], got %d" % (N, M))
    if start_index < 0 or start_index >= N:
        raise ValueError("start_index must be in [0, %d), got %d" % (N, start_index))

    # Distance from every point to its nearest selected center
    xyz = cloud.xyz
    selected = np.zeros(M, dtype=np.int64)
    selected[0] = start_index
    distance = scipy.spatial.distance.cdist(xyz, xyz[start_index : start_index + 1])[:, 0]
    distance[start_index] = -np.inf
    for i in range(1, M):
        # argmax returns the lowest index among ties
        index = int(np.argmax(distance))
        selected[i] = index
        distance = np.minimum(
            distance, scipy.spatial.distance.cdist(xyz, xyz[index : index + 1])[:, 0]
        )
        distance[index] = -np.inf
    return selected


def knn_group(cloud: PointCloud, center_indices: np.ndarray, K: int) -> PatchSet:
    """
    Group the K nearest points around each center

    Neighbour lists are sorted by (distance, index) and always start with the
    center itself.

    Args:
        cloud: The point cloud
        center_indices: The M center indices
        K: The neighbours per patch

    Returns:
        The patch set

    """
    N = cloud.n_points
    if K < 1 or K > N:
        raise ValueError("Group size must be in [1, %d], got %d" % (N, K))
    center_indices = np.asarray(center_indices, dtype=np.int64)
    distance = scipy.spatial.distance.cdist(cloud.xyz[center_indices], cloud.xyz)

    # Duplicate points share distance 0 so pin the center to the front
    distance[np.arange(len(center_indices)), center_indices] = -1
    neighbors = np.argsort(distance, axis=1, kind="stable")[:, :K]
    return PatchSet(center_indices, neighbors)


def coverage_radius(cloud: PointCloud, center_indices: np.ndarray) -> float:
    """
    Returns:
        The maximum over points of the distance to the nearest center

    """
    distance = scipy.spatial.distance.cdist(cloud.xyz, cloud.xyz[center_indices])
    return float(distance.min(axis=1).max())


def group_points(cloud: PointCloud, patches: PatchSet) -> Tuple[np.ndarray, np.ndarray]:
    """
    Gather the patch points with xyz re-centered to the patch center

    Returns:
        The (M, K, 3 + F) groups and the (M, 3) centers

    """
    centers = cloud.xyz[patches.center_indices]
    groups = cloud.points[patches.neighbor_indices].copy()
    groups[..., :3] -= centers[:, None, :]
    return groups, centers


def embed_groups(groups, net) -> Tensor:
    """
    Apply the shared point-wise network and max-pool over the K points

    Args:
        groups: The (..., M, K, 3 + F) point groups
        net: The point-wise network

    Returns:
        The (..., M, D_p) patch embeddings

    """
    groups = T.as_tensor(groups)
    if groups.shape[-1] != net.in_dim:
        raise ValueError(
            "Point width %d does not match the network input width %d"
            % (groups.shape[-1], net.in_dim)
        )
    return T.max(net(groups), axis=-2)


def embed_patches(cloud: PointCloud, patches: PatchSet, net) -> PatchTokens:
    """
    Embed every patch of the cloud

    Args:
        cloud: The point cloud
        patches: The patch set
        net: The point-wise network

    Returns:
        The patch tokens in center order

    """
    groups, _ = group_points(cloud, patches)
    return PatchTokens(embed_groups(groups, net))


class PatchEmbedding(coca3d.nn.MLP):
    """
    The shared point-wise two layer perceptron

    """

    def __init__(
        self, n_features: int, hidden_dim: int, embed_dim: int, rng: np.random.Generator
    ):
        super().__init__(3 + n_features, hidden_dim, embed_dim, rng, activation="gelu")


class PointTokenizer(coca3d.nn.Module):
    """
    Turns a point cloud into M patch tokens

    Each token is the max-pooled patch embedding plus a linear embedding of
    the absolute patch center.

    """

    def __init__(self, config: coca3d.config.PointTokenizer, rng: np.random.Generator):
        self.config = config
        self.net = PatchEmbedding(
            config.n_features, config.hidden_dim, config.embed_dim, rng
        )
        self.center_embedding = coca3d.nn.Linear(3, config.embed_dim, rng)

    def group(self, cloud: PointCloud) -> Tuple[np.ndarray, np.ndarray]:
        """
        Sample and group the patches (no trainable state involved)

        """
        centers = farthest_point_sample(
            cloud, self.config.num_patches, self.config.start_index
        )
        return group_points(cloud, knn_group(cloud, centers, self.config.group_size))

    def forward(self, groups, centers) -> Tensor:
        """
        Args:
            groups: The (..., M, K, 3 + F) point groups
            centers: The (..., M, 3) patch centers

        Returns:
            The (..., M, D_p) patch tokens

        """
        return embed_groups(groups, self.net) + self.center_embedding(
            T.as_tensor(centers)
        )

    def tokenize(self, cloud: PointCloud) -> PatchTokens:
        groups, centers = self.group(cloud)
        return PatchTokens(self.forward(groups, centers))

