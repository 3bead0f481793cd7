#
# coca3d.train._train.py
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
import pandas as pd
import coca3d.checkpoint
import coca3d.config
import coca3d.tensor as T
from functools import singledispatch
from typing import Dict
from typing import List
from typing import Union
from coca3d.contrastive import retrieval_top1
from coca3d.data import SceneDataset
from coca3d.model import CHECKPOINT_FILENAME
from coca3d.model import CoCa3D
from coca3d.seeding import derive
from coca3d.tensor import NonFiniteError
from coca3d.text import build_vocab
from coca3d.train._optimizer import AdamW
from coca3d.train._optimizer import cosine_lr


__all__ = ["METRICS_FILENAME", "TrainingPlan", "train", "load_metrics"]


# Get the logger
logger = logging.getLogger(__name__)


METRICS_FILENAME = "metrics.jsonl"


class TrainingPlan(object):
    """
    The batch of every step

    The shuffle of epoch e comes from the ("training", e) seed stream, so
    the batch of any step can be recomputed without carrying RNG state.

    """

    def __init__(self, n_items: int, config: coca3d.config.Training, seed: int):
        if n_items < 1:
            raise ValueError("Cannot train on an empty dataset")
        self.n_items = n_items
        self.seed = seed
        self.batch_size = min(config.batch_size, n_items)
        self.steps_per_epoch = max(1, n_items // self.batch_size)
        if config.max_steps is not None:
            self.total_steps = config.max_steps
        else:
            self.total_steps = config.epochs * self.steps_per_epoch
        self._epoch = None
        self._order = None

    def batch(self, step: int) -> np.ndarray:
        epoch, k = divmod(step, self.steps_per_epoch)
        if epoch != self._epoch:
            self._epoch = epoch
            self._order = derive(self.seed, "training", epoch).permutation(self.n_items)
        return self._order[k * self.batch_size : (k + 1) * self.batch_size]


def _read_metrics(filename: str) -> List[dict]:
    if not os.path.exists(filename):
        return []
    with open(filename) as infile:
        return [json.loads(line) for line in infile if line.strip()]


def load_metrics(path: str) -> pd.DataFrame:
    """
    Read the JSON lines metrics log (or the log in a training directory)

    """
    if os.path.isdir(path):
        path = os.path.join(path, METRICS_FILENAME)
    if not os.path.exists(path):
        raise FileNotFoundError("File not found: %s" % path)
    return pd.DataFrame(_read_metrics(path))


@singledispatch
def train(
    config_file,
    dataset: str,
    output: str,
    lambda_: float = None,
    learning_rate: float = None,
    batch_size: int = None,
    steps: int = None,
    seed: int = None,
    resume: bool = False,
) -> CoCa3D:
    """
    Train the model

    Args:
        config_file: The input config filename
        dataset: The dataset directory
        output: The training directory
        lambda_: Override the loss balance weight
        learning_rate: Override the peak learning rate
        batch_size: Override the batch size
        steps: Override the number of steps
        seed: Override the seed
        resume: Continue from the checkpoint in the output directory

    Returns:
        The trained model

    """

    # Load the configuration
    config = coca3d.config.load(config_file)

    # Set the command line args in a dict
    if lambda_ is not None:
        config.training.lambda_ = lambda_
    if learning_rate is not None:
        config.training.learning_rate = learning_rate
    if batch_size is not None:
        config.training.batch_size = batch_size
    if steps is not None:
        config.training.max_steps = steps
    if seed is not None:
        config.seed = seed

    # Validate the overrides together
    config = coca3d.config.load(config.model_dump(mode="json", by_alias=True))

    # Print some options
    logger.info("\n" + coca3d.config.show(config, full=True))

    # Do the training
    return _train_Config(config, dataset, output, resume=resume)


@train.register(coca3d.config.Config)
def _train_Config(
    config: coca3d.config.Config,
    dataset: Union[str, SceneDataset],
    output: str,
    resume: bool = False,
    until: int = None,
) -> CoCa3D:
    """
    Train the model

    With until set the run stops (and checkpoints) before that step, as if
    it had been interrupted there.

    Each step encodes the batch scenes, computes the contrastive loss on the
    pooled features and the teacher forced caption loss, backpropagates the
    total and applies AdamW to the non frozen parameters with the cosine
    annealed learning rate. The metrics of every step are appended to the
    JSON lines log. Checkpoints are written atomically.

    """
    if isinstance(dataset, str):
        dataset = SceneDataset(dataset)
    scenes = dataset.scenes("train")
    if len(scenes) == 0:
        raise ValueError("The training split is empty")
    os.makedirs(output, exist_ok=True)
    metrics_filename = os.path.join(output, METRICS_FILENAME)

    # Build or restore the model
    if resume:
        model, records = CoCa3D.load(output)
        model.config = config
    else:
        vocab = build_vocab(dataset.corpus("train"), config.vocabulary.max_size)
        model = CoCa3D(config, vocab, box_prior=dataset.box_prior("train"))
        records = None
    optimizer = AdamW(model.parameters(), config.training)
    if records is not None:
        optimizer.load_state_records(records)
    start_step = optimizer.step_count
    frozen_hash = coca3d.checkpoint.frozen_hash(model)
    logger.info(
        "Parameters: %d trainable, %d frozen (hash %s)"
        % (
            len(model.trainable_parameters()),
            len(model.frozen_parameters()),
            frozen_hash[:12],
        )
    )

    # The encoders are frozen so the groups and text features are cached
    captions = [s.caption for s in scenes]
    with T.no_grad():
        grouped = [model.group(s.cloud) for s in scenes]
        text_features = model.encode_texts(captions).data
    groups = np.stack([g for g, _ in grouped])
    centers = np.stack([c for _, c in grouped])
    gt_boxes = [[o.box for o in s.objects] for s in scenes]

    # Drop the log entries after the checkpoint
    history = [m for m in _read_metrics(metrics_filename) if m["step"] < start_step]
    with open(metrics_filename, "w") as outfile:
        for m in history:
            outfile.write(json.dumps(m) + "\n")

    plan = TrainingPlan(len(scenes), config.training, config.seed)
    logger.info(
        "Training on %d pairs for %d steps (batch %d, %d steps per epoch)"
        % (len(scenes), plan.total_steps, plan.batch_size, plan.steps_per_epoch)
    )

    def save():
        model.save(output, extra=optimizer.state_records())
        logger.info(
            "Wrote checkpoint at step %d to %s"
            % (optimizer.step_count, os.path.join(output, CHECKPOINT_FILENAME))
        )

    last: Dict[str, float] = history[-1] if history else {}
    end_step = plan.total_steps if until is None else min(until, plan.total_steps)
    for step in range(start_step, end_step):
        index = plan.batch(step)
        lr = cosine_lr(
            step,
            plan.total_steps,
            config.training.learning_rate,
            config.training.min_lr_ratio,
        )
        batch_captions = [captions[i] for i in index]

        # Forward and backward. Parameters the loss does not reach keep no
        # gradient and are left alone by the optimizer
        model.zero_grad(set_to_none=True)
        try:
            losses = model.compute_losses(
                groups[index],
                centers[index],
                batch_captions,
                text_features=T.as_tensor(text_features[index]),
                gt_boxes=[gt_boxes[i] for i in index],
            )
            losses.l_total.backward()
        except NonFiniteError as e:
            raise RuntimeError(
                "Non-finite value at step %d on batch %s (last finite losses %s): %s"
                % (step, index.tolist(), last, e)
            )

        # Update the parameters
        optimizer.step(lr)
        model.contrastive.clamp()

        # Log the metrics
        last = {"step": step, **losses.to_dict()}
        last["lr"] = lr
        last["retrieval_top1"] = retrieval_top1(losses.sim, keys=batch_captions)
        with open(metrics_filename, "a") as outfile:
            outfile.write(json.dumps(last) + "\n")
        if step % config.training.log_every == 0 or step == plan.total_steps - 1:
            logger.info(
                "Step %d/%d: l_con=%.4f l_cap=%.4f l_total=%.4f lr=%.2e top1=%.3f"
                % (
                    step + 1,
                    plan.total_steps,
                    last["l_con"],
                    last["l_cap"],
                    last["l_total"],
                    lr,
                    last["retrieval_top1"],
                )
            )
        if (step + 1) % config.training.checkpoint_every == 0:
            save()

    # Write the final checkpoint
    save()
    if coca3d.checkpoint.frozen_hash(model) != frozen_hash:
        raise RuntimeError("Frozen parameters changed during training")
    return model
