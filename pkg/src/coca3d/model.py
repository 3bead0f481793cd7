#
# coca3d.model.py
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
import numpy as np
import coca3d.checkpoint
import coca3d.config
import coca3d.nn
import coca3d.tensor as T
from typing import Dict
from typing import Optional
from typing import Sequence
from typing import Tuple
from coca3d.box_head import BoxHead
from coca3d.box_head import box_loss
from coca3d.contrastive import ContrastiveState
from coca3d.contrastive import ProjectionHead
from coca3d.contrastive import info_nce
from coca3d.contrastive import project_and_normalize
from coca3d.contrastive import similarity_matrix
from coca3d.decoder import CaptionDecoder
from coca3d.decoder import caption_loss
from coca3d.decoder import total_loss
from coca3d.evaluate import Box3D
from coca3d.pointcloud import PatchTokens
from coca3d.pointcloud import PointCloud
from coca3d.pointcloud import PointTokenizer
from coca3d.scene import SceneBackbone
from coca3d.scene import SceneTokens
from coca3d.scene import TaskTokens
from coca3d.scene import encode_scene
from coca3d.scene import freeze_backbone
from coca3d.seeding import derive
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor
from coca3d.text import PAD
from coca3d.text import TextBatch
from coca3d.text import TextEncoder
from coca3d.text import Vocabulary
from coca3d.text import encode_text
from coca3d.text import tokenize


__all__ = [
    "CHECKPOINT_FILENAME",
    "CONFIG_FILENAME",
    "VOCAB_FILENAME",
    "Losses",
    "CoCa3D",
    "decoder_targets",
]


# Get the logger
logger = logging.getLogger(__name__)


CHECKPOINT_FILENAME = "checkpoint.c3ca"
CONFIG_FILENAME = "config.yaml"
VOCAB_FILENAME = "vocab.json"


def decoder_targets(
    captions: Sequence[str], vocab: Vocabulary, max_decode_len: int
) -> Tuple[np.ndarray, np.ndarray]:
    """
    The teacher forced decoder inputs and targets of a batch of captions

    A caption [CLS, BOS, w1 .. wn, EOS] gives the input [BOS, w1 .. wn] and
    the target [w1 .. wn, EOS]. Both are PAD-right to the longest caption.

    Returns:
        The (B, L) inputs and (B, L) targets

    """
    sequences = [tokenize(c, vocab)[1:] for c in captions]
    length = max(len(s) - 1 for s in sequences)
    if length > max_decode_len:
        raise ValueError(
            "Caption of %d tokens exceeds max_decode_len %d" % (length, max_decode_len)
        )
    inputs = np.full((len(sequences), length), PAD, dtype=np.int64)
    targets = np.full((len(sequences), length), PAD, dtype=np.int64)
    for i, s in enumerate(sequences):
        inputs[i, : len(s) - 1] = s[:-1]
        targets[i, : len(s) - 1] = s[1:]
    return inputs, targets


class Losses(object):
    """
    The losses of one batch

    """

    def __init__(
        self,
        l_con: Tensor,
        l_cap: Tensor,
        l_total: Tensor,
        sim: Tensor,
        l_box: Optional[Tensor] = None,
    ):
        self.l_con = l_con
        self.l_cap = l_cap
        self.l_total = l_total
        self.sim = sim
        self.l_box = l_box

    def to_dict(self) -> Dict[str, float]:
        result = {
            "l_con": self.l_con.item(),
            "l_cap": self.l_cap.item(),
            "l_total": self.l_total.item(),
        }
        if self.l_box is not None:
            result["l_box"] = self.l_box.item()
        return result


class CoCa3D(coca3d.nn.Module):
    """
    The full model: the point tokenizer, the frozen scene and text
    transformers, the task tokens, the projection heads with the learnable
    temperature, the caption decoder and the optional box head

    Each component draws its initial weights from its own named seed
    stream, so changing the size of one leaves the others unchanged. A
    model built from a bare vocab_size works on token ids only.

    """

    def __init__(
        self,
        config: coca3d.config.Config,
        vocab: Optional[Vocabulary],
        box_prior: Box3D = None,
        vocab_size: int = None,
    ):
        if vocab_size is None:
            vocab_size = vocab.size
        model = config.model
        seed = config.seed
        D_p = model.point_tokenizer.embed_dim
        D = model.scene_encoder.model_dim
        n_tokens = model.point_tokenizer.num_patches + model.scene_encoder.task_tokens

        def rng(name):
            return derive(seed, "init", name)

        self.config = config
        self.vocab = vocab
        self.point_tokenizer = PointTokenizer(
            model.point_tokenizer, rng("point_tokenizer")
        )
        self.task_tokens = TaskTokens(model.scene_encoder.task_tokens, D_p)
        self.scene_adapter = (
            coca3d.nn.Linear(D_p, D, rng("scene_adapter")) if D_p != D else None
        )
        self.scene_positions = Parameter(
            rng("scene_positions").normal(0, 0.02, size=(n_tokens, D))
        )
        self.scene_backbone = SceneBackbone(model.scene_encoder, rng("scene_backbone"))
        self.text_backbone = TextEncoder(
            model.text_encoder, vocab_size, rng("text_backbone")
        )
        self.proj_v = ProjectionHead(D, model.contrastive.shared_dim, rng("proj_v"))
        self.proj_t = ProjectionHead(
            model.text_encoder.model_dim, model.contrastive.shared_dim, rng("proj_t")
        )
        self.contrastive = ContrastiveState(model.contrastive)
        self.decoder = CaptionDecoder(model.decoder, vocab_size, D, rng("decoder"))
        self.box_head = (
            BoxHead(model.box_head, D, rng("box_head"), box_prior)
            if model.box_head.enabled
            else None
        )

        # The encoders stay at their seeded initialisation
        freeze_backbone(self.scene_backbone)
        freeze_backbone(self.text_backbone)

    def group(self, cloud: PointCloud) -> Tuple[np.ndarray, np.ndarray]:
        return self.point_tokenizer.group(cloud)

    def encode_grouped(self, groups, centers) -> SceneTokens:
        """
        Encode scenes that have already been sampled and grouped

        Args:
            groups: The (B, M, K, 3 + F) groups
            centers: The (B, M, 3) patch centers

        """
        tokens = PatchTokens(self.point_tokenizer(groups, centers))
        return encode_scene(
            tokens,
            self.task_tokens,
            self.scene_backbone,
            adapter=self.scene_adapter,
            positions=self.scene_positions,
        )

    def encode_scenes(self, clouds: Sequence[PointCloud]) -> SceneTokens:
        grouped = [self.group(c) for c in clouds]
        groups = np.stack([g for g, _ in grouped])
        centers = np.stack([c for _, c in grouped])
        return self.encode_grouped(groups, centers)

    def encode_texts(self, captions: Sequence[str]) -> Tensor:
        """
        The pooled [CLS] features of the captions

        """
        batch = TextBatch.from_texts(captions, self.vocab)
        return encode_text(batch, self.text_backbone)

    def compute_losses(
        self,
        groups: np.ndarray,
        centers: np.ndarray,
        captions: Sequence[str],
        text_features=None,
        gt_boxes: Sequence[Sequence[Box3D]] = None,
    ) -> Losses:
        """
        The losses of a batch of (scene, caption) pairs

        Args:
            groups: The (B, M, K, 3 + F) groups
            centers: The (B, M, 3) patch centers
            captions: The B captions
            text_features: The (B, D_t) text features (encoded when None)
            gt_boxes: The ground truth boxes of every scene (box head only)

        Returns:
            The losses

        """
        if text_features is None:
            text_features = self.encode_texts(captions)
        inputs, targets = decoder_targets(
            captions, self.vocab, self.decoder.max_decode_len
        )
        return self.compute_losses_from_ids(
            groups, centers, text_features, inputs, targets, gt_boxes
        )

    def compute_losses_from_ids(
        self,
        groups: np.ndarray,
        centers: np.ndarray,
        text_features,
        inputs: np.ndarray,
        targets: np.ndarray,
        gt_boxes: Sequence[Sequence[Box3D]] = None,
    ) -> Losses:
        """
        The losses of a batch given the text features and the teacher forced
        decoder inputs and targets

        """
        training = self.config.training
        scene = self.encode_grouped(groups, centers)

        # The contrastive loss on the pooled features
        z_v = project_and_normalize(scene.global_feature, self.proj_v)
        z_t = project_and_normalize(text_features, self.proj_t)
        sim = similarity_matrix(z_v, z_t)
        l_con = info_nce(sim, self.contrastive.temperature, self.contrastive.symmetric)

        # The teacher forced caption loss
        l_cap = caption_loss(self.decoder(inputs, scene.token_outputs), targets)
        l_total = total_loss(l_con, l_cap, training.lambda_, training.lambda_target)

        # The box loss
        l_box = None
        if self.box_head is not None and gt_boxes is not None:
            raw = self.box_head(scene.task_outputs)
            terms = [box_loss(raw[b], boxes) for b, boxes in enumerate(gt_boxes)]
            l_box = T.sum(T.stack(terms)) * (1.0 / len(terms))
            l_total = l_total + l_box * self.config.model.box_head.weight
        return Losses(l_con, l_cap, l_total, sim, l_box)

    def save(self, directory: str, extra: dict = None):
        """
        Write the config, the vocabulary and the checkpoint

        """
        os.makedirs(directory, exist_ok=True)
        coca3d.config.save(self.config, os.path.join(directory, CONFIG_FILENAME))
        self.vocab.save(os.path.join(directory, VOCAB_FILENAME))
        coca3d.checkpoint.save(
            os.path.join(directory, CHECKPOINT_FILENAME), self, extra=extra
        )

    @classmethod
    def load(cls, directory: str) -> Tuple["CoCa3D", dict]:
        """
        Rebuild a model from a training directory

        Returns:
            The model and the raw checkpoint records

        """
        for filename in [CONFIG_FILENAME, VOCAB_FILENAME, CHECKPOINT_FILENAME]:
            path = os.path.join(directory, filename)
            if not os.path.exists(path):
                raise FileNotFoundError("File not found: %s" % path)
        config = coca3d.config.load(os.path.join(directory, CONFIG_FILENAME))
        vocab = Vocabulary.load(os.path.join(directory, VOCAB_FILENAME))
        model = cls(config, vocab)
        records = coca3d.checkpoint.load(os.path.join(directory, CHECKPOINT_FILENAME))
        coca3d.checkpoint.restore(model, records)
        return model, records

    def forward(self, clouds: Sequence[PointCloud]) -> SceneTokens:
        return self.encode_scenes(clouds)

