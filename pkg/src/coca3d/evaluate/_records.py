#
# coca3d.evaluate._records.py
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
from pydantic import Field
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Type
from typing import TypeVar
from coca3d.config import BaseModel
from coca3d.evaluate._box import Box3D
from coca3d.evaluate._box import iou3d


__all__ = [
    "EvalRecord",
    "CaptionRecord",
    "GroundTruth",
    "nms",
    "read_jsonl",
    "write_jsonl",
    "align_predictions",
]


# Get the logger
logger = logging.getLogger(__name__)


class EvalRecord(BaseModel):
    """
    A predicted caption and box aligned to one annotated object

    A missing predicted box means the object was not detected (IoU 0).

    """

    scene_id: Optional[str] = Field(None, description="The scene identifier")

    object_id: Optional[int] = Field(None, description="The object index")

    predicted_box: Optional[Box3D] = Field(None, description="The predicted box")

    predicted_caption: str = Field(description="The predicted caption")

    gt_box: Box3D = Field(description="The ground truth box")

    references: List[str] = Field(
        description="The reference captions", min_length=1
    )

    score: float = Field(1.0, description="The confidence used for NMS ordering")

    @property
    def iou(self) -> float:
        if self.predicted_box is None:
            return 0.0
        return iou3d(self.predicted_box, self.gt_box)


class CaptionRecord(BaseModel):
    """
    A generated caption as written by the caption command

    """

    scene_id: str = Field(description="The scene identifier")

    object_id: int = Field(0, description="The object index")

    caption: str = Field(description="The generated caption")

    log_prob: float = Field(0.0, description="The caption log probability")

    box: Optional[Box3D] = Field(None, description="The predicted box")

    score: float = Field(1.0, description="The prediction confidence")


class GroundTruth(BaseModel):
    """
    One annotated object

    """

    scene_id: str = Field(description="The scene identifier")

    object_id: int = Field(description="The object index")

    box: Box3D = Field(description="The ground truth box")

    references: List[str] = Field(description="The reference captions", min_length=1)


def nms(records: Iterable[EvalRecord], iou_threshold: float) -> List[EvalRecord]:
    """
    Greedy non maximum suppression on the predicted boxes

    The highest scoring record is kept and every record whose predicted box
    overlaps it with IoU above the threshold is dropped, until none remain.
    Equal scores keep their input order. Records without a predicted box
    never suppress or get suppressed.

    Returns:
        The kept records in score order

    """
    remaining = sorted(records, key=lambda r: -r.score)
    kept: List[EvalRecord] = []
    for record in remaining:
        if record.predicted_box is not None and any(
            k.predicted_box is not None
            and iou3d(record.predicted_box, k.predicted_box) > iou_threshold
            for k in kept
        ):
            continue
        kept.append(record)
    return kept


M = TypeVar("M", bound=BaseModel)


def read_jsonl(filename: str, model: Type[M] = EvalRecord) -> List[M]:
    """
    Read one model per line

    """
    if not os.path.exists(filename):
        raise FileNotFoundError("File not found: %s" % filename)
    with open(filename) as infile:
        return [model(**json.loads(line)) for line in infile if line.strip()]


def write_jsonl(filename: str, records: Iterable[BaseModel]):
    """
    Write one model per line

    """
    with open(filename, "w") as outfile:
        for record in records:
            outfile.write(
                json.dumps(record.model_dump(mode="json"), sort_keys=True) + "\n"
            )


def align_predictions(
    predictions: Iterable[CaptionRecord], ground_truth: Iterable[GroundTruth]
) -> List[EvalRecord]:
    """
    Align the predictions with every annotated object

    Predictions are matched by (scene_id, object_id). An object without a
    prediction gets an empty caption and no box, so it counts with IoU 0. A
    prediction without a box is evaluated against the ground truth box.

    """
    by_key: Dict[tuple, CaptionRecord] = {}
    for p in predictions:
        by_key[(p.scene_id, p.object_id)] = p
    records = []
    for gt in ground_truth:
        p = by_key.get((gt.scene_id, gt.object_id))
        if p is None:
            records.append(
                EvalRecord(
                    scene_id=gt.scene_id,
                    object_id=gt.object_id,
                    predicted_box=None,
                    predicted_caption="",
                    gt_box=gt.box,
                    references=gt.references,
                    score=0.0,
                )
            )
        else:
            records.append(
                EvalRecord(
                    scene_id=gt.scene_id,
                    object_id=gt.object_id,
                    predicted_box=p.box if p.box is not None else gt.box,
                    predicted_caption=p.caption,
                    gt_box=gt.box,
                    references=gt.references,
                    score=p.score,
                )
            )
    return records
