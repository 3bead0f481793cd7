#
# coca3d._run.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#

import logging
import os
import coca3d.config
import coca3d.data
import coca3d.evaluate
import coca3d.infer
import coca3d.train
from functools import singledispatch
from coca3d.model import CoCa3D

ClusterMethod = coca3d.config.ClusterMethod


__all__ = ["STEPS", "CAPTIONS_FILENAME", "REPORT_FILENAME", "run"]


# Get the logger
logger = logging.getLogger(__name__)


# The pipeline stages in order
STEPS = ["datagen", "train", "caption", "eval"]

# The files written to the run directory beside the training output
CAPTIONS_FILENAME = "captions.jsonl"
REPORT_FILENAME = "report.json"


@singledispatch
def run(
    config_file,
    dataset_dir: str,
    run_dir: str,
    steps: list = None,
    seed: int = None,
    cluster_method: ClusterMethod = None,
    cluster_max_workers: int = None,
    split: str = "test",
):
    """
    Generate the data, train, caption and evaluate

    If steps is None then all steps are run, otherwise steps is a list which
    contains one or more of the following: all, datagen, train, caption and
    eval. A stage that is skipped reads the output of the previous stage
    from disk.

    Args:
        config_file: The config filename
        dataset_dir: The dataset directory
        run_dir: The training and results directory
        steps: Choose the steps to run
        seed: Override the seed
        cluster_method: The cluster method to use (default None)
        cluster_max_workers: The maximum number of cluster jobs
        split: The split to caption and evaluate

    Returns:
        The metric report (None if eval is not run)

    """

    # Load the configuration
    config = coca3d.config.load(config_file)

    # Set the command line args in a dict
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

    # Do the work
    return _run_Config(config, dataset_dir, run_dir, steps=steps, split=split)


@run.register(coca3d.config.Config)
def _run_Config(
    config: coca3d.config.Config,
    dataset_dir: str,
    run_dir: str,
    steps: list = None,
    split: str = "test",
):
    """
    Generate the data, train, caption and evaluate

    Args:
        config: The config object
        dataset_dir: The dataset directory
        run_dir: The training and results directory
        steps: The steps to run
        split: The split to caption and evaluate

    """

    # Setup the steps
    if steps is None or "all" in steps:
        steps = list(STEPS)
    unknown = set(steps) - set(STEPS)
    if unknown:
        raise ValueError("Unknown steps: %s" % ", ".join(sorted(unknown)))
    captions_file = os.path.join(run_dir, CAPTIONS_FILENAME)

    # Create the dataset or open
    if "datagen" in steps:
        dataset = coca3d.data.generate_dataset(config, dataset_dir)
    else:
        dataset = coca3d.data.load_dataset(dataset_dir)

    # Train the model or open
    if "train" in steps:
        model = coca3d.train.train(config, dataset, run_dir)
    elif "caption" in steps:
        model, _ = CoCa3D.load(run_dir)

    # Caption the held out scenes
    if "caption" in steps:
        predictions = coca3d.infer.caption(
            model, dataset, output=captions_file, split=split
        )
    elif "eval" in steps:
        predictions = coca3d.evaluate.read_jsonl(
            captions_file, coca3d.evaluate.CaptionRecord
        )

    # Score the captions against every annotated object
    report = None
    if "eval" in steps:
        records = coca3d.evaluate.align_predictions(
            predictions, dataset.ground_truth(split)
        )
        report = coca3d.evaluate.evaluate(config, records)
        report.save(os.path.join(run_dir, REPORT_FILENAME))
        logger.info("\n" + str(report))
    return report
