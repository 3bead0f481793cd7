#
# coca3d.data._scene.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import json
import logging
import os
import numpy as np
import coca3d.config
from math import pi
from pydantic import Field
from typing import List
from typing import Optional
from coca3d.config import BaseModel
from coca3d.evaluate import Box3D
from coca3d.evaluate import GroundTruth
from coca3d.pointcloud import PointCloud
from coca3d.seeding import derive


__all__ = [
    "COLORS",
    "FLOOR_COLOR",
    "SceneObject",
    "Scene",
    "caption_object",
    "describe_relation",
    "place_relative",
    "sample_surface",
    "generate_scene",
]


# Get the logger
logger = logging.getLogger(__name__)


# The rgb value of each colour
COLORS = {
    "red": (1.0, 0.0, 0.0),
    "green": (0.0, 1.0, 0.0),
    "blue": (0.0, 0.0, 1.0),
    "yellow": (1.0, 1.0, 0.0),
    "white": (1.0, 1.0, 1.0),
    "black": (0.0, 0.0, 0.0),
}

# The desk colour
FLOOR_COLOR = (0.5, 0.5, 0.5)

# The half width of the desk (m)
DESK_HALF_WIDTH = 1.5

# The object extents are drawn from this range (m)
SIZE_RANGE = (0.2, 0.4)

# Gaps between a placed object and its anchor (m)
FAR_GAP = (0.2, 0.4)
NEAR_GAP = (0.05, 0.15)

# A horizontal gap below this reads as "next to"
NEXT_TO_GAP = 0.15

# The fraction of points on the desk surface
FLOOR_FRACTION = 0.2


class SceneObject(BaseModel):
    """
    An annotated object

    """

    object_id: int = Field(description="The object index within the scene")

    shape: coca3d.config.ShapeName = Field(description="The object shape")

    color: coca3d.config.ColorName = Field(description="The object colour")

    box: Box3D = Field(description="The ground truth box")

    captions: List[str] = Field(description="The paraphrase captions", min_length=1)


class Scene(object):
    """
    A point cloud with its annotated objects

    The points are stored as (N, 3 + 4) rows of xyz, rgb and height.

    """

    def __init__(self, scene_id: str, points: np.ndarray, objects: List[SceneObject]):
        self.scene_id = scene_id
        self.points = np.asarray(points, dtype=np.float64)
        self.objects = list(objects)

    @property
    def cloud(self) -> PointCloud:
        return PointCloud(self.points)

    @property
    def caption(self) -> str:
        """
        The training target: the first caption of the primary object

        """
        return self.objects[0].captions[0]

    def ground_truth(self) -> List[GroundTruth]:
        return [
            GroundTruth(
                scene_id=self.scene_id,
                object_id=o.object_id,
                box=o.box,
                references=o.captions,
            )
            for o in self.objects
        ]

    def to_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "points": self.points.tolist(),
            "objects": [o.model_dump(mode="json") for o in self.objects],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scene":
        return cls(
            d["scene_id"],
            np.array(d["points"], dtype=np.float64),
            [SceneObject(**o) for o in d["objects"]],
        )

    def save(self, filename: str):
        with open(filename, "w") as outfile:
            json.dump(self.to_dict(), outfile)

    @classmethod
    def load(cls, filename: str) -> "Scene":
        if not os.path.exists(filename):
            raise FileNotFoundError("File not found: %s" % filename)
        with open(filename) as infile:
            return cls.from_dict(json.load(infile))


def _box_of(center, size) -> Box3D:
    return Box3D(
        center=tuple(float(c) for c in center), size=tuple(float(s) for s in size)
    )


def _sample_size(shape: str, rng: np.random.Generator) -> np.ndarray:
    if shape == "box":
        return rng.uniform(*SIZE_RANGE, size=3)
    elif shape == "sphere":
        return np.repeat(rng.uniform(*SIZE_RANGE), 3)
    elif shape == "cylinder":
        diameter, height = rng.uniform(*SIZE_RANGE, size=2)
        return np.array([diameter, diameter, height])
    raise RuntimeError("Unknown shape %s" % shape)


def sample_surface(
    shape: str, box: Box3D, n: int, rng: np.random.Generator
) -> np.ndarray:
    """
    Sample points uniformly on the surface of a shape inscribed in the box

    Args:
        shape: box, sphere or cylinder
        box: The bounding box
        n: The number of points
        rng: The random generator

    Returns:
        The (n, 3) points

    """

    def box_surface(center, size):
        # Pick a face in proportion to its area
        sx, sy, sz = size
        areas = np.array([sy * sz, sy * sz, sx * sz, sx * sz, sx * sy, sx * sy])
        face = rng.choice(6, size=n, p=areas / areas.sum())
        points = rng.uniform(-0.5, 0.5, size=(n, 3))
        axis = face // 2
        points[np.arange(n), axis] = np.where(face % 2 == 0, -0.5, 0.5)
        return center + points * size

    def sphere_surface(center, size):
        direction = rng.normal(size=(n, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        return center + 0.5 * direction * size

    def cylinder_surface(center, size):
        # Side or caps in proportion to their areas
        radius = 0.5 * size[0]
        height = size[2]
        side = 2 * pi * radius * height
        caps = 2 * pi * radius**2
        on_side = rng.uniform(size=n) < side / (side + caps)
        theta = rng.uniform(0, 2 * pi, size=n)
        r = np.where(on_side, radius, radius * np.sqrt(rng.uniform(size=n)))
        z = np.where(
            on_side,
            rng.uniform(-0.5, 0.5, size=n) * height,
            np.where(rng.uniform(size=n) < 0.5, -0.5, 0.5) * height,
        )
        return center + np.stack([r * np.cos(theta), r * np.sin(theta), z], axis=1)

    center = np.asarray(box.center)
    size = np.asarray(box.size)
    return {
        "box": box_surface,
        "sphere": sphere_surface,
        "cylinder": cylinder_surface,
    }[shape](center, size)


def describe_relation(a: Box3D, b: Box3D) -> Optional[str]:
    """
    The relation of box a to box b as it reads in a caption

    Left and right run along x, behind and in front of along y (behind is
    further away, +y). A box resting on top of the other is above it. A box
    underneath the other has no relation in the vocabulary.

    Returns:
        The relation or None

    """
    d = np.asarray(a.center) - np.asarray(b.center)
    half = 0.5 * (np.asarray(a.size) + np.asarray(b.size))
    overlap_xy = np.all(np.abs(d[:2]) < half[:2])
    if overlap_xy:
        if a.lower[2] >= b.upper[2] - 1e-9:
            return "above"
        return None
    gap = np.max(np.abs(d[:2]) - half[:2])
    if gap < NEXT_TO_GAP:
        return "next to"
    if abs(d[0]) >= abs(d[1]):
        return "left of" if d[0] < 0 else "right of"
    return "behind" if d[1] > 0 else "in front of"


def caption_object(obj: dict, other: dict = None, relation: str = None) -> str:
    """
    Fill in the caption template

    """
    if other is None or relation is None:
        return "a %s %s" % (obj["color"], obj["shape"])
    return "the %s %s is %s the %s %s" % (
        obj["color"],
        obj["shape"],
        relation,
        other["color"],
        other["shape"],
    )


def place_relative(
    relation: str, size: np.ndarray, anchor: Box3D, rng: np.random.Generator
) -> np.ndarray:
    """
    Choose a center for an object of the given size so that it stands in
    the relation to the anchor box

    A far relation leaves a gap of at least 0.2 m between the footprints
    along its axis. Next to leaves a gap below 0.15 m.

    Returns:
        The center

    """
    anchor_center = np.asarray(anchor.center)
    anchor_size = np.asarray(anchor.size)
    half = 0.5 * (anchor_size + size)
    center = np.array([anchor_center[0], anchor_center[1], 0.5 * size[2]])
    if relation == "above":
        center[2] = anchor_size[2] + 0.5 * size[2]
        return center
    if relation == "next to":
        gap = rng.uniform(*NEAR_GAP)
        axis = int(rng.integers(2))
        sign = 1.0 if rng.uniform() < 0.5 else -1.0
    else:
        gap = rng.uniform(*FAR_GAP)
        axis, sign = {
            "left of": (0, -1.0),
            "right of": (0, 1.0),
            "behind": (1, 1.0),
            "in front of": (1, -1.0),
        }[relation]
    center[axis] += sign * (half[axis] + gap)
    other = 1 - axis
    center[other] += rng.uniform(-0.1, 0.1)
    return center


def _footprints_clear(center, size, boxes: List[Box3D], clearance=0.05) -> bool:
    for b in boxes:
        d = np.abs(np.asarray(center[:2]) - np.asarray(b.center[:2]))
        half = 0.5 * (np.asarray(size[:2]) + np.asarray(b.size[:2])) + clearance
        if np.all(d < half):
            return False
    return True


def _allocate(n_points: int, n_objects: int, floor: bool) -> List[int]:
    n_floor = int(round(FLOOR_FRACTION * n_points)) if floor else 0
    n_floor = min(n_floor, n_points - n_objects)
    per_object = (n_points - n_floor) // n_objects
    counts = [per_object] * n_objects
    counts[-1] += n_points - n_floor - per_object * n_objects
    return [n_floor] + counts


def generate_scene(config: coca3d.config.Dataset, index: int, seed: int) -> Scene:
    """
    Generate one synthetic desk scene

    Object 0 is the primary object. With two or more objects it is placed
    in a sampled relation to object 1, and its first caption states that
    relation. Further objects are scattered on the desk without overlap.

    Args:
        config: The dataset parameters
        index: The scene index
        seed: The master seed

    Returns:
        The scene

    """
    rng = derive(seed, "data", index)

    # Sample the attributes
    n_objects = int(rng.integers(config.min_objects, config.max_objects + 1))
    attributes = [
        {
            "shape": config.shapes[rng.integers(len(config.shapes))],
            "color": config.colors[rng.integers(len(config.colors))],
        }
        for _ in range(n_objects)
    ]
    sizes = [_sample_size(a["shape"], rng) for a in attributes]

    # Place the anchor and the primary object
    boxes: List[Optional[Box3D]] = [None] * n_objects
    relation = None
    if n_objects == 1:
        center = np.array([*rng.uniform(-0.5, 0.5, size=2), 0.5 * sizes[0][2]])
        boxes[0] = _box_of(center, sizes[0])
    else:
        center = np.array([*rng.uniform(-0.5, 0.5, size=2), 0.5 * sizes[1][2]])
        boxes[1] = _box_of(center, sizes[1])
        relation = config.relations[rng.integers(len(config.relations))]
        boxes[0] = _box_of(place_relative(relation, sizes[0], boxes[1], rng), sizes[0])

    # Scatter the others with rejection sampling
    placed = [0] if n_objects == 1 else [0, 1]
    for j in range(2, n_objects):
        for _ in range(100):
            center = np.array(
                [
                    *rng.uniform(-DESK_HALF_WIDTH + 0.2, DESK_HALF_WIDTH - 0.2, size=2),
                    0.5 * sizes[j][2],
                ]
            )
            if _footprints_clear(center, sizes[j], [boxes[i] for i in placed]):
                boxes[j] = _box_of(center, sizes[j])
                placed.append(j)
                break
        else:
            logger.debug("Scene %d: dropped object %d after 100 attempts" % (index, j))
    attributes = [attributes[i] for i in placed]
    boxes = [boxes[i] for i in placed]
    n_objects = len(placed)

    # The captions, the constructed relation first
    objects = []
    for i in range(n_objects):
        captions = []
        if i == 0 and relation is not None:
            captions.append(caption_object(attributes[0], attributes[1], relation))
        for j in range(n_objects):
            if j == i or (i == 0 and j == 1 and relation is not None):
                continue
            r = describe_relation(boxes[i], boxes[j])
            if r is not None:
                captions.append(caption_object(attributes[i], attributes[j], r))
        if len(captions) == 0:
            captions.append(caption_object(attributes[i]))
        objects.append(
            SceneObject(
                object_id=i,
                shape=attributes[i]["shape"],
                color=attributes[i]["color"],
                box=boxes[i],
                captions=captions[: config.captions_per_object],
            )
        )

    # Sample the points
    counts = _allocate(config.points_per_scene, n_objects, config.floor)
    xyz = [rng.uniform(-DESK_HALF_WIDTH, DESK_HALF_WIDTH, size=(counts[0], 3))]
    xyz[0][:, 2] = 0
    rgb = [np.tile(FLOOR_COLOR, (counts[0], 1))]
    for obj, n in zip(objects, counts[1:]):
        xyz.append(sample_surface(obj.shape, obj.box, n, rng))
        rgb.append(np.tile(COLORS[obj.color], (n, 1)))
    xyz = np.concatenate(xyz, axis=0)
    rgb = np.concatenate(rgb, axis=0)
    points = np.concatenate([xyz, rgb, xyz[:, 2:3]], axis=1)
    points = points[rng.permutation(len(points))]
    return Scene("scene_%05d" % index, points, objects)
