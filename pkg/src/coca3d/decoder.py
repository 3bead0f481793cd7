#
# coca3d.decoder.py
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
import coca3d.config
import coca3d.nn
import coca3d.tensor as T
from typing import Callable
from typing import List
from typing import Sequence
from typing import Tuple
from coca3d.scene import SceneTokens
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor
from coca3d.text import BOS
from coca3d.text import EOS
from coca3d.text import PAD


__all__ = [
    "DecoderLayer",
    "CaptionDecoder",
    "CaptionHypothesis",
    "DecoderState",
    "decoder_forward",
    "caption_loss",
    "total_loss",
    "greedy_search",
    "beam_search",
    "generate",
]


# Get the logger
logger = logging.getLogger(__name__)


class DecoderLayer(coca3d.nn.Module):
    """
    Causal self-attention, cross-attention over the scene tokens and a
    feed-forward block, each pre-normed and residual

    """

    def __init__(
        self,
        dim: int,
        heads: int,
        mlp_ratio: int,
        scene_dim: int,
        rng: np.random.Generator,
    ):
        self.ln1 = coca3d.nn.LayerNorm(dim)
        self.self_attn = coca3d.nn.MultiHeadAttention(dim, heads, rng)
        self.ln2 = coca3d.nn.LayerNorm(dim)
        self.cross_attn = coca3d.nn.MultiHeadAttention(dim, heads, rng, kv_dim=scene_dim)
        self.ln3 = coca3d.nn.LayerNorm(dim)
        self.mlp = coca3d.nn.MLP(dim, dim * mlp_ratio, dim, rng, activation="gelu")

    def forward(self, x: Tensor, memory: Tensor = None, kv=None) -> Tensor:
        x = x + self.self_attn(self.ln1(x), causal_mask=True)
        x = x + self.cross_attn(self.ln2(x), memory, kv=kv)
        return x + self.mlp(self.ln3(x))


class CaptionDecoder(coca3d.nn.Module):
    """
    The autoregressive caption decoder

    """

    def __init__(
        self,
        config: coca3d.config.Decoder,
        vocab_size: int,
        scene_dim: int,
        rng: np.random.Generator,
    ):
        self.max_decode_len = config.max_decode_len
        self.token_embedding = Parameter(
            rng.normal(0, 0.1, size=(vocab_size, config.model_dim))
        )
        self.positions = Parameter(
            rng.normal(0, 0.01, size=(config.max_decode_len, config.model_dim))
        )
        self.layers = [
            DecoderLayer(
                config.model_dim, config.heads, config.mlp_ratio, scene_dim, rng
            )
            for _ in range(config.layers)
        ]
        self.ln_final = coca3d.nn.LayerNorm(config.model_dim)
        self.output = coca3d.nn.Linear(config.model_dim, vocab_size, rng)

    @property
    def vocab_size(self) -> int:
        return self.token_embedding.shape[0]

    def cache(self, memory) -> List[Tuple[Tensor, Tensor]]:
        """
        Project the scene tokens to keys and values once per layer

        """
        memory = T.as_tensor(memory)
        if memory.ndim == 2:
            memory = memory.reshape(1, *memory.shape)
        return [layer.cross_attn.project_kv(memory) for layer in self.layers]

    def forward(self, target_ids, memory=None, kv=None) -> Tensor:
        """
        Args:
            target_ids: The (L,) or (B, L) decoder input ids starting with BOS
            memory: The (M + m_t, D) or (B, M + m_t, D) scene tokens
            kv: The cached keys and values (instead of memory)

        Returns:
            The (L, V) or (B, L, V) logits

        """
        target_ids = np.asarray(target_ids, dtype=np.int64)
        batched = target_ids.ndim == 2
        if not batched:
            target_ids = target_ids[None, :]
        B, L = target_ids.shape
        if L == 0 or np.any(target_ids[:, 0] != BOS):
            raise ValueError("Decoder input must start with BOS")
        if L > self.max_decode_len:
            raise ValueError(
                "Decoder input of length %d exceeds max_decode_len %d"
                % (L, self.max_decode_len)
            )
        if kv is None:
            memory = T.as_tensor(memory)
            if memory.ndim == 2:
                memory = memory.reshape(1, *memory.shape)
            kv = [None] * len(self.layers)

        # Embed the tokens and run the layers
        x = T.take(self.token_embedding, target_ids) + self.positions[:L]
        for layer, layer_kv in zip(self.layers, kv):
            x = layer(x, memory, kv=layer_kv)
        logits = self.output(self.ln_final(x))
        if not batched:
            logits = logits.reshape(logits.shape[1:])
        return logits


def decoder_forward(
    target_ids, scene: SceneTokens, decoder: CaptionDecoder
) -> Tensor:
    """
    Teacher forced logits of the decoder conditioned on all scene tokens

    """
    return decoder(target_ids, scene.token_outputs)


def caption_loss(logits, reference_ids) -> Tensor:
    """
    The summed negative log likelihood of the reference tokens

    PAD positions of the reference are excluded. A batch of sequences is
    summed per sequence and averaged over the batch.

    Args:
        logits: The (L, V) or (B, L, V) logits
        reference_ids: The (L,) or (B, L) reference ids

    Returns:
        The scalar loss

    """
    logits = T.as_tensor(logits)
    reference_ids = np.asarray(reference_ids, dtype=np.int64)
    if logits.shape[:-1] != reference_ids.shape:
        raise ValueError(
            "Logits %s do not match reference %s"
            % (logits.shape, reference_ids.shape)
        )
    if np.any(reference_ids < 0) or np.any(reference_ids >= logits.shape[-1]):
        raise ValueError("Reference id out of range")

    # The one hot target masked to the non PAD positions
    target = np.zeros(logits.shape)
    index = np.nonzero(reference_ids != PAD)
    target[index + (reference_ids[index],)] = 1.0
    count = reference_ids.shape[0] if reference_ids.ndim == 2 else 1
    return -T.sum(T.log_softmax(logits, axis=-1) * target) * (1.0 / count)


def total_loss(l_con, l_cap, lam: float, target: str = "caption"):
    """
    Combine the contrastive and caption losses

    With target "caption" the result is l_con + lam * l_cap. With target
    "contrastive" it is l_cap + lam * l_con.

    """
    if lam < 0:
        raise ValueError("lambda must be >= 0, got %g" % lam)
    if target == coca3d.config.LambdaTarget.caption:
        base, weighted = l_con, l_cap
    elif target == coca3d.config.LambdaTarget.contrastive:
        base, weighted = l_cap, l_con
    else:
        raise ValueError("Unknown lambda target %s" % target)
    if lam == 0:
        return base
    return base + weighted * lam


class CaptionHypothesis(object):
    """
    A partial or finished caption

    """

    def __init__(self, token_ids: List[int], log_prob: float, finished: bool):
        self.token_ids = list(token_ids)
        self.log_prob = float(log_prob)
        self.finished = finished

    def __len__(self):
        return len(self.token_ids)

    @property
    def score(self) -> float:
        """
        The length normalized log probability

        """
        return self.log_prob / max(1, len(self.token_ids))

    def __repr__(self) -> str:
        return "CaptionHypothesis(%s, %.4f, %s)" % (
            self.token_ids,
            self.log_prob,
            self.finished,
        )


class DecoderState(object):
    """
    The per scene decoding state: the cached scene keys and values and the
    ids generated so far

    """

    def __init__(self, decoder: CaptionDecoder, scene: SceneTokens):
        self.decoder = decoder
        with T.no_grad():
            self.kv = decoder.cache(scene.token_outputs)
        self.token_ids = [BOS]

    @property
    def step(self) -> int:
        return len(self.token_ids) - 1

    def log_probs(self, prefix: Sequence[int]) -> np.ndarray:
        """
        The next token log probabilities after the prefix (starting with BOS)

        """
        with T.no_grad():
            logits = self.decoder(np.asarray(prefix), kv=self.kv)
            return T.log_softmax(logits, axis=-1).data[-1]

    def advance(self, token: int) -> np.ndarray:
        self.token_ids.append(int(token))
        return self.log_probs(self.token_ids)

    def __call__(self, prefix: Sequence[int]) -> np.ndarray:
        return self.log_probs(prefix)


def greedy_search(
    step_fn: Callable[[Sequence[int]], np.ndarray], max_len: int
) -> CaptionHypothesis:
    """
    Pick the most likely token at every step (ties to the lowest id)

    Args:
        step_fn: Maps a prefix (starting with BOS) to next token log probs
        max_len: The maximum number of generated tokens

    Returns:
        The hypothesis (generated ids, without BOS)

    """
    hypothesis = CaptionHypothesis([], 0.0, False)
    while len(hypothesis) < max_len and not hypothesis.finished:
        log_probs = step_fn([BOS] + hypothesis.token_ids)
        token = int(np.argmax(log_probs))
        hypothesis = CaptionHypothesis(
            hypothesis.token_ids + [token],
            hypothesis.log_prob + log_probs[token],
            token == EOS,
        )
    return hypothesis


def beam_search(
    step_fn: Callable[[Sequence[int]], np.ndarray], width: int, max_len: int
) -> CaptionHypothesis:
    """
    Keep the width most likely hypotheses at every step

    Pruning uses the summed log probability with ties going to the
    lexicographically lowest ids. Finished hypotheses are carried forward
    unchanged. The final ranking divides the log probability by the length.

    Args:
        step_fn: Maps a prefix (starting with BOS) to next token log probs
        width: The beam width
        max_len: The maximum number of generated tokens

    Returns:
        The best hypothesis

    """
    if width < 1:
        raise ValueError("Beam width must be >= 1, got %d" % width)

    def rank(hypothesis):
        return (-hypothesis.log_prob, hypothesis.token_ids)

    beams = [CaptionHypothesis([], 0.0, False)]
    for _ in range(max_len):
        if all(h.finished for h in beams):
            break
        candidates = []
        for h in beams:
            if h.finished:
                candidates.append(h)
                continue
            log_probs = step_fn([BOS] + h.token_ids)
            for token in np.argsort(-log_probs, kind="stable")[:width]:
                token = int(token)
                candidates.append(
                    CaptionHypothesis(
                        h.token_ids + [token],
                        h.log_prob + log_probs[token],
                        token == EOS,
                    )
                )
        beams = sorted(candidates, key=rank)[:width]
    return sorted(beams, key=lambda h: (-h.score, h.token_ids))[0]


def generate(
    scene: SceneTokens,
    decoder: CaptionDecoder,
    mode: str = "greedy",
    width: int = 1,
    max_len: int = 32,
) -> CaptionHypothesis:
    """
    Generate a caption for one scene

    Args:
        scene: The encoded scene (unbatched)
        decoder: The caption decoder
        mode: greedy or beam
        width: The beam width
        max_len: The maximum number of generated tokens

    Returns:
        The best hypothesis

    """
    if mode == coca3d.config.GenerationMode.beam and width < 1:
        raise ValueError("Beam width must be >= 1, got %d" % width)
    state = DecoderState(decoder, scene)
    max_len = min(max_len, decoder.max_decode_len)
    if mode == coca3d.config.GenerationMode.greedy:
        return greedy_search(state, max_len)
    elif mode == coca3d.config.GenerationMode.beam:
        return beam_search(state, width, max_len)
    raise ValueError("Unknown generation mode %s" % mode)
