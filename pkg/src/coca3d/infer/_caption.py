#
# coca3d.infer._caption.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import logging
import coca3d.config
import coca3d.tensor as T
from typing import List
from typing import Union
from coca3d.box_head import predict_boxes
from coca3d.data import Scene
from coca3d.data import SceneDataset
from coca3d.decoder import generate
from coca3d.evaluate import CaptionRecord
from coca3d.evaluate import write_jsonl
from coca3d.model import CoCa3D
from coca3d.text import detokenize


__all__ = ["caption_scene", "caption"]


# Get the logger
logger = logging.getLogger(__name__)


def caption_scene(
    model: CoCa3D, scene: Scene, config: coca3d.config.Generation
) -> CaptionRecord:
    """
    Caption the primary object of a scene

    With the box head the most confident slot gives the box and the score.

    """
    with T.no_grad():
        tokens = model.encode_grouped(*model.group(scene.cloud))
    hypothesis = generate(
        tokens, model.decoder, config.mode, config.beam_width, config.max_len
    )
    box, score = None, 1.0
    if model.box_head is not None:
        box, score = max(predict_boxes(tokens, model.box_head), key=lambda b: b[1])
    return CaptionRecord(
        scene_id=scene.scene_id,
        object_id=0,
        caption=detokenize(hypothesis.token_ids, model.vocab),
        log_prob=hypothesis.log_prob,
        box=box,
        score=score,
    )


def caption(
    model: Union[str, CoCa3D],
    dataset: Union[str, SceneDataset],
    output: str = None,
    split: str = "test",
    generation: coca3d.config.Generation = None,
) -> List[CaptionRecord]:
    """
    Caption every scene of a split

    Args:
        model: The model or its training directory
        dataset: The dataset or its directory
        output: The JSON lines output file
        split: The split (None for all scenes)
        generation: Override the generation parameters of the model config

    Returns:
        The caption records

    """
    if isinstance(model, str):
        model, _ = CoCa3D.load(model)
    if isinstance(dataset, str):
        dataset = SceneDataset(dataset)
    if generation is None:
        generation = model.config.generation
    records = []
    for scene in dataset.scenes(split):
        record = caption_scene(model, scene, generation)
        logger.info("%s: %s" % (record.scene_id, record.caption))
        records.append(record)
    if output is not None:
        write_jsonl(output, records)
        logger.info("Wrote %d captions to %s" % (len(records), output))
    return records
