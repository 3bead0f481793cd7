#
# coca3d.data._dataset.py
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
import coca3d.futures
from functools import singledispatch
from typing import Dict
from typing import List
from typing import Tuple
from coca3d.data._scene import Scene
from coca3d.data._scene import generate_scene
from coca3d.evaluate import Box3D
from coca3d.evaluate import GroundTruth
from coca3d.seeding import derive


__all__ = ["SPLITS", "split_indices", "generate_dataset", "SceneDataset", "load_dataset"]


# Get the logger
logger = logging.getLogger(__name__)


SPLITS = ("train", "val", "test")


def split_indices(
    count: int, config: coca3d.config.Dataset, seed: int
) -> Dict[str, List[int]]:
    """
    Partition the scene indices into disjoint train, val and test splits

    """
    order = derive(seed, "data", "split").permutation(count)
    n_train = int(round(config.train_fraction * count))
    n_val = int(round(config.val_fraction * count))
    n_train = min(n_train, count)
    n_val = min(n_val, count - n_train)
    return {
        "train": sorted(int(i) for i in order[:n_train]),
        "val": sorted(int(i) for i in order[n_train : n_train + n_val]),
        "test": sorted(int(i) for i in order[n_train + n_val :]),
    }


def _scene_filename(directory: str, index: int) -> str:
    return os.path.join(directory, "scene_%05d.json" % index)


def _generate_scene(config: coca3d.config.Dataset, index: int, seed: int):
    return index, generate_scene(config, index, seed)


@singledispatch
def generate_dataset(
    config_file,
    output: str,
    count: int = None,
    seed: int = None,
    cluster_method: coca3d.config.ClusterMethod = None,
    cluster_max_workers: int = None,
) -> "SceneDataset":
    """
    Generate the synthetic dataset

    Args:
        config_file: The input config filename
        output: The output directory
        count: Override the number of scenes
        seed: Override the seed
        cluster_method: The cluster method to use (default None)
        cluster_max_workers: The maximum number of worker processes

    Returns:
        The dataset

    """

    # Load the configuration
    config = coca3d.config.load(config_file)

    # Set the command line args in a dict
    if count is not None:
        config.dataset.count = count
    if seed is not None:
        config.seed = seed
    if cluster_method is not None:
        config.cluster.method = cluster_method
    if cluster_max_workers is not None:
        config.cluster.max_workers = cluster_max_workers

    # Validate the overrides together
    config = coca3d.config.load(config.model_dump(mode="json", by_alias=True))

    # Print some options
    logger.info("\n" + coca3d.config.show(config, full=True))

    # Generate the dataset
    return _generate_dataset_Config(config, output)


@generate_dataset.register(coca3d.config.Config)
def _generate_dataset_Config(config: coca3d.config.Config, output: str):
    """
    Generate the synthetic dataset

    """
    count = config.dataset.count
    if count < 1:
        raise ValueError("count must be >= 1, got %d" % count)
    os.makedirs(output, exist_ok=True)

    # If we are executing in a single process just do a for loop
    scenes: Dict[int, Scene] = {}
    if config.cluster.method is None:
        for i in range(count):
            logger.debug("    Generating scene %d/%d" % (i + 1, count))
            scenes[i] = generate_scene(config.dataset, i, config.seed)
    else:
        max_workers = min(config.cluster.max_workers, count)
        logger.info("Initialising %d worker processes" % max_workers)

        # Get the futures executor
        with coca3d.futures.factory(config.cluster.method, max_workers) as executor:
            futures = [
                executor.submit(_generate_scene, config.dataset, i, config.seed)
                for i in range(count)
            ]

            # Wait for results
            for j, future in enumerate(coca3d.futures.as_completed(futures)):
                i, scene = future.result()
                scenes[i] = scene
                logger.debug("    Processed scene %d (%d/%d)" % (i, j + 1, count))

    # Write in index order
    for i in range(count):
        scenes[i].save(_scene_filename(output, i))
    splits = split_indices(count, config.dataset, config.seed)
    index = {
        "spec": config.dataset.model_dump(mode="json"),
        "seed": config.seed,
        "scenes": [os.path.basename(_scene_filename(output, i)) for i in range(count)],
        "splits": splits,
    }
    with open(os.path.join(output, "dataset.json"), "w") as outfile:
        json.dump(index, outfile, indent=2)
    logger.info(
        "Wrote %d scenes to %s (%s)"
        % (count, output, ", ".join("%s: %d" % (k, len(v)) for k, v in splits.items()))
    )
    return SceneDataset(output)


class SceneDataset(object):
    """
    A dataset directory written by generate_dataset

    """

    def __init__(self, directory: str):
        filename = os.path.join(directory, "dataset.json")
        if not os.path.exists(filename):
            raise FileNotFoundError("File not found: %s" % filename)
        with open(filename) as infile:
            index = json.load(infile)
        self.directory = directory
        self.spec = index["spec"]
        self.seed = index["seed"]
        self.filenames = index["scenes"]
        self.splits = index["splits"]
        if len(self.filenames) == 0:
            raise ValueError("Dataset %s is empty" % directory)
        self._cache: Dict[int, Scene] = {}

    def __len__(self) -> int:
        return len(self.filenames)

    def scene(self, index: int) -> Scene:
        if index not in self._cache:
            self._cache[index] = Scene.load(
                os.path.join(self.directory, self.filenames[index])
            )
        return self._cache[index]

    def indices(self, split: str = None) -> List[int]:
        """
        The scene indices of a split (all scenes when split is None)

        """
        if split is None:
            return list(range(len(self)))
        if split not in self.splits:
            raise ValueError("Unknown split %s" % split)
        return list(self.splits[split])

    def scenes(self, split: str = None) -> List[Scene]:
        return [self.scene(i) for i in self.indices(split)]

    def pairs(self, split: str = None) -> List[Tuple[Scene, str]]:
        """
        The (scene, primary caption) training pairs

        """
        return [(s, s.caption) for s in self.scenes(split)]

    def corpus(self, split: str = None) -> List[str]:
        """
        Every caption of every object

        """
        return [c for s in self.scenes(split) for o in s.objects for c in o.captions]

    def ground_truth(self, split: str = None) -> List[GroundTruth]:
        return [gt for s in self.scenes(split) for gt in s.ground_truth()]

    def box_prior(self, split: str = None) -> Box3D:
        """
        The box spanning every ground truth box, so it overlaps all of them

        """
        boxes = [o.box for s in self.scenes(split) for o in s.objects]
        lower = np.min([b.lower for b in boxes], axis=0)
        upper = np.max([b.upper for b in boxes], axis=0)
        return Box3D(
            center=tuple(float(x) for x in 0.5 * (lower + upper)),
            size=tuple(float(x) for x in upper - lower),
        )


def load_dataset(directory: str) -> SceneDataset:
    return SceneDataset(directory)
