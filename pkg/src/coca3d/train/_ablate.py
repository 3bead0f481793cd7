#
# coca3d.train._ablate.py
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
import pandas as pd
import coca3d.config
from typing import Sequence
from typing import Union
from coca3d.data import SceneDataset
from coca3d.evaluate import align_predictions
from coca3d.evaluate import evaluate
from coca3d.infer import caption
from coca3d.train._train import train


__all__ = ["DEFAULT_LAMBDAS", "ablate"]


# Get the logger
logger = logging.getLogger(__name__)


# The default lambda grid
DEFAULT_LAMBDAS = (0.0, 0.1, 0.5, 1.0, 2.0)

# The IoU threshold the ablation reports
ABLATION_IOU = 0.5


def ablate(
    config: coca3d.config.Config,
    dataset: Union[str, SceneDataset],
    output: str,
    lambdas: Sequence[float] = DEFAULT_LAMBDAS,
    seeds: Sequence[int] = (0, 1, 2),
    split: str = "test",
) -> pd.DataFrame:
    """
    Train one run per (lambda, seed) and score the captions of the held
    out split

    Args:
        config: The base configuration
        dataset: The dataset or its directory
        output: The directory for the runs
        lambdas: The lambda values
        seeds: The seeds
        split: The evaluation split

    Returns:
        One row per run followed by one mean row per lambda (seed is None
        and kind is "mean")

    """
    if isinstance(dataset, str):
        dataset = SceneDataset(dataset)
    os.makedirs(output, exist_ok=True)
    ground_truth = dataset.ground_truth(split)
    if len(ground_truth) == 0:
        raise ValueError("No annotated objects in split %s" % split)

    rows = []
    for lam in lambdas:
        for seed in seeds:
            run_config = coca3d.config.load(config)
            run_config.training.lambda_ = lam
            run_config.seed = seed
            run_config.evaluation.iou_thresholds = [ABLATION_IOU]
            run_config = coca3d.config.load(
                run_config.model_dump(mode="json", by_alias=True)
            )
            directory = os.path.join(output, "lambda_%g_seed_%d" % (lam, seed))
            logger.info("Ablation run lambda=%g seed=%d in %s" % (lam, seed, directory))

            # Train, caption and score
            model = train(run_config, dataset, directory)
            predictions = caption(model, dataset, split=split)
            records = align_predictions(predictions, ground_truth)
            report = evaluate(run_config, records)
            row = {"kind": "run", "lambda": lam, "seed": seed}
            for metric in run_config.evaluation.metrics:
                row[metric] = report["%s@%g" % (metric, ABLATION_IOU)]
            rows.append(row)

    # Append the mean of each lambda
    runs = pd.DataFrame(rows)
    metrics = [c for c in runs.columns if c not in ("kind", "lambda", "seed")]
    means = runs.groupby("lambda", sort=False)[metrics].mean().reset_index()
    means["kind"] = "mean"
    means["seed"] = None
    table = pd.concat([runs, means[runs.columns]], ignore_index=True)
    table.to_csv(os.path.join(output, "ablation.csv"), index=False)
    logger.info("\n" + table.to_string())
    return table
