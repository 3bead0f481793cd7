#
# coca3d.evaluate._report.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import collections
import json
import logging
import numpy as np
import pandas as pd
import coca3d.config
from functools import singledispatch
from typing import Dict
from typing import List
from typing import Sequence
from coca3d.evaluate._caption import bleu4
from coca3d.evaluate._caption import cider
from coca3d.evaluate._caption import meteor_lite
from coca3d.evaluate._caption import rouge_l
from coca3d.evaluate._records import EvalRecord
from coca3d.evaluate._records import nms


__all__ = [
    "METRIC_MAX",
    "MetricReport",
    "caption_scores",
    "m_at_k_iou",
    "evaluate",
]


# Get the logger
logger = logging.getLogger(__name__)


# The upper bound of each caption metric
METRIC_MAX = {"cider": 10.0, "bleu4": 1.0, "rougel": 1.0, "meteor": 1.0}


class MetricReport(object):
    """
    The m@kIoU values keyed "<metric>@<k>"

    """

    def __init__(self, values: Dict[str, float], n: int):
        self.values = dict(values)
        self.n = n

    def __getitem__(self, key: str) -> float:
        return self.values[key]

    def to_dict(self) -> dict:
        return {"values": self.values, "n": self.n}

    def save(self, filename: str):
        with open(filename, "w") as outfile:
            json.dump(self.to_dict(), outfile, indent=2, sort_keys=True)

    def table(self) -> pd.DataFrame:
        """
        Returns:
            The values with a row per metric and a column per IoU threshold

        """
        rows: Dict[str, Dict[str, float]] = collections.OrderedDict()
        for key, value in self.values.items():
            metric, k = key.split("@")
            rows.setdefault(metric, collections.OrderedDict())["%s@IoU" % k] = value
        return pd.DataFrame.from_dict(rows, orient="index")

    def __str__(self) -> str:
        return self.table().to_string(float_format=lambda x: "%.4f" % x)


def caption_scores(records: Sequence[EvalRecord], metric: str) -> np.ndarray:
    """
    Score every predicted caption against its references

    CIDEr takes its document frequencies from the whole record set.

    """
    candidates = [r.predicted_caption for r in records]
    references = [r.references for r in records]
    if metric == "cider":
        return cider(candidates, references)
    function = {"bleu4": bleu4, "rougel": rouge_l, "meteor": meteor_lite}[metric]
    return np.array([function(c, refs) for c, refs in zip(candidates, references)])


def m_at_k_iou(
    records: Sequence[EvalRecord], metric: str, k: float, scores: np.ndarray = None
) -> float:
    """
    The mean over records of the caption metric, zeroed where the predicted
    box overlaps the ground truth with IoU below k

    Args:
        records: The records aligned to all annotated objects
        metric: The metric name
        k: The IoU threshold
        scores: Precomputed caption scores

    Returns:
        The m@kIoU value

    """
    if len(records) == 0:
        raise ValueError("Cannot evaluate an empty record set")
    if scores is None:
        scores = caption_scores(records, metric)
    iou = np.array([r.iou for r in records])
    return float(np.mean(scores * (iou >= k)))


@singledispatch
def evaluate(
    config_file,
    records: List[EvalRecord],
    iou_thresholds: List[float] = None,
    nms_threshold: float = None,
    metrics: List[str] = None,
) -> MetricReport:
    """
    Evaluate the records

    Args:
        config_file: The input config filename
        records: The records aligned to all annotated objects
        iou_thresholds: Override the IoU thresholds
        nms_threshold: Override the NMS threshold
        metrics: Override the metrics

    Returns:
        The metric report

    """

    # Load the configuration
    config = coca3d.config.load(config_file)

    # Set the command line args in a dict
    if iou_thresholds is not None:
        config.evaluation.iou_thresholds = iou_thresholds
    if nms_threshold is not None:
        config.evaluation.nms_threshold = nms_threshold
    if metrics is not None:
        config.evaluation.metrics = metrics

    # Validate the overrides together
    config = coca3d.config.load(config.model_dump(mode="json", by_alias=True))

    # Print some options
    logger.info("\n" + coca3d.config.show(config.evaluation, full=True))

    # Do the evaluation
    return _evaluate_Config(config, records)


@evaluate.register(coca3d.config.Config)
def _evaluate_Config(config: coca3d.config.Config, records: List[EvalRecord]):
    """
    Evaluate the records

    NMS runs within each scene. A suppressed record keeps its place in the
    denominator and scores zero.

    """
    if len(records) == 0:
        raise ValueError("Cannot evaluate an empty record set")

    # Suppress duplicates scene by scene
    groups: Dict[object, List[int]] = collections.OrderedDict()
    for i, r in enumerate(records):
        key = r.scene_id if r.scene_id is not None else ("record", i)
        groups.setdefault(key, []).append(i)
    keep = np.zeros(len(records), dtype=bool)
    for indices in groups.values():
        kept = nms([records[i] for i in indices], config.evaluation.nms_threshold)
        kept_ids = set(id(r) for r in kept)
        for i in indices:
            keep[i] = id(records[i]) in kept_ids
    logger.info("Kept %d / %d records after NMS" % (keep.sum(), len(records)))

    # Compute the metrics
    values = collections.OrderedDict()
    for metric in config.evaluation.metrics:
        scores = caption_scores(records, metric) * keep
        for k in config.evaluation.iou_thresholds:
            values["%s@%g" % (metric, k)] = m_at_k_iou(records, metric, k, scores)
    return MetricReport(values, len(records))
