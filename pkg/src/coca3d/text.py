#
# coca3d.text.py
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
import os
import numpy as np
import coca3d.config
import coca3d.nn
import coca3d.tensor as T
from typing import Dict
from typing import Iterable
from typing import List
from typing import Optional
from typing import Sequence
from coca3d.tensor import Parameter
from coca3d.tensor import Tensor


__all__ = [
    "PAD",
    "BOS",
    "EOS",
    "CLS",
    "UNK",
    "JOIN",
    "SPECIALS",
    "Vocabulary",
    "TextBatch",
    "TextEncoder",
    "normalize",
    "build_vocab",
    "tokenize",
    "detokenize",
    "encode_text",
]


# Get the logger
logger = logging.getLogger(__name__)


# The special token ids
PAD = 0
BOS = 1
EOS = 2
CLS = 3
UNK = 4
SPECIALS = {"PAD": PAD, "BOS": BOS, "EOS": EOS, "CLS": CLS, "UNK": UNK}

# The size of the byte fallback table
NUM_BYTES = 256

# Never valid in UTF-8 so it can mark a subword that continues a word
JOIN = 0xFF


def normalize(text: str) -> str:
    """
    Lowercase and collapse whitespace

    """
    return " ".join(text.lower().split())


class Vocabulary(object):
    """
    Special tokens, then whole word subwords, then the 256 byte fallbacks

    """

    def __init__(self, subwords: Sequence[str]):
        self.subwords = list(subwords)
        self.index = {word: len(SPECIALS) + i for i, word in enumerate(self.subwords)}
        if len(self.index) != len(self.subwords):
            raise ValueError("Duplicate subwords in vocabulary")

        # Subwords grouped by length for longest prefix matching
        self.lengths = sorted({len(w) for w in self.subwords}, reverse=True)

    @property
    def byte_offset(self) -> int:
        return len(SPECIALS) + len(self.subwords)

    @property
    def size(self) -> int:
        return self.byte_offset + NUM_BYTES

    def __len__(self) -> int:
        return self.size

    def byte_id(self, value: int) -> int:
        return self.byte_offset + value

    def is_subword(self, token: int) -> bool:
        return len(SPECIALS) <= token < self.byte_offset

    def is_byte(self, token: int) -> bool:
        return self.byte_offset <= token < self.size

    def to_dict(self) -> dict:
        return {"specials": dict(SPECIALS), "subwords": list(self.subwords)}

    @classmethod
    def from_dict(cls, d: dict) -> "Vocabulary":
        if d.get("specials", SPECIALS) != SPECIALS:
            raise ValueError("Vocabulary has unexpected special tokens")
        return cls(d["subwords"])

    def save(self, filename: str):
        with open(filename, "w") as outfile:
            json.dump(self.to_dict(), outfile, indent=2)

    @classmethod
    def load(cls, filename: str) -> "Vocabulary":
        if not os.path.exists(filename):
            raise FileNotFoundError("Vocabulary not found: %s" % filename)
        with open(filename) as infile:
            return cls.from_dict(json.load(infile))


def build_vocab(corpus: Iterable[str], max_size: int) -> Vocabulary:
    """
    Build the vocabulary from the most frequent whole words

    Words are ranked by count with ties broken lexicographically.

    Args:
        corpus: The documents
        max_size: The total vocabulary size (specials + subwords + bytes)

    Returns:
        The vocabulary

    """
    corpus = list(corpus)
    if len(corpus) == 0:
        raise ValueError("Cannot build a vocabulary from an empty corpus")
    if max_size < len(SPECIALS) + NUM_BYTES:
        raise ValueError(
            "max_size must be at least %d, got %d"
            % (len(SPECIALS) + NUM_BYTES, max_size)
        )

    # Count the words
    counts: Dict[str, int] = collections.Counter()
    for document in corpus:
        counts.update(document.lower().split())

    # Keep the most frequent
    ranked = sorted(counts.items(), key=lambda item: (-item[1], item[0]))
    num_subwords = max_size - len(SPECIALS) - NUM_BYTES
    return Vocabulary([word for word, _ in ranked[:num_subwords]])


def _longest_subword(word: str, start: int, vocab: Vocabulary) -> Optional[str]:
    for length in vocab.lengths:
        piece = word[start : start + length]
        if len(piece) == length and piece in vocab.index:
            return piece
    return None


def _tokenize_word(word: str, vocab: Vocabulary) -> List[int]:
    """
    Repeatedly take the longest subword at the current position, falling
    back to the bytes of one character where no subword matches

    A subword inside the word is preceded by the join byte.

    """
    ids = []
    start = 0
    while start < len(word):
        piece = _longest_subword(word, start, vocab)
        if piece is not None:
            if start > 0:
                ids.append(vocab.byte_id(JOIN))
            ids.append(vocab.index[piece])
            start += len(piece)
        else:
            ids.extend(vocab.byte_id(b) for b in word[start].encode("utf-8"))
            start += 1
    return ids


def tokenize(text: str, vocab: Vocabulary) -> List[int]:
    """
    Convert text to token ids wrapped as [CLS, BOS, ..., EOS]

    A word starting with a subword implies a preceding space. A word which
    starts with byte ids is preceded by the space byte unless it is first.

    Args:
        text: The text
        vocab: The vocabulary

    Returns:
        The token ids

    """
    ids = [CLS, BOS]
    for i, word in enumerate(text.lower().split()):
        pieces = _tokenize_word(word, vocab)
        if i > 0 and vocab.is_byte(pieces[0]):
            ids.append(vocab.byte_id(ord(" ")))
        ids.extend(pieces)
    ids.append(EOS)
    return ids


def detokenize(ids: Iterable[int], vocab: Vocabulary) -> str:
    """
    Convert token ids back to normalized text, skipping special tokens

    """
    buffer = bytearray()
    join = False
    for token in ids:
        token = int(token)
        if token < 0 or token >= vocab.size:
            raise ValueError("Token id %d out of range [0, %d)" % (token, vocab.size))
        if token < len(SPECIALS):
            continue
        if vocab.is_subword(token):
            if buffer and not join:
                buffer.extend(b" ")
            buffer.extend(vocab.subwords[token - len(SPECIALS)].encode("utf-8"))
            join = False
        elif token == vocab.byte_id(JOIN):
            join = True
        else:
            buffer.append(token - vocab.byte_offset)
            join = False
    return normalize(buffer.decode("utf-8", errors="replace"))


class TextBatch(object):
    """
    A PAD-right batch of token id sequences

    """

    def __init__(self, token_ids: np.ndarray, lengths: np.ndarray):
        self.token_ids = np.asarray(token_ids, dtype=np.int64)
        self.lengths = np.asarray(lengths, dtype=np.int64)
        self.cls_feature = None

    def __len__(self) -> int:
        return self.token_ids.shape[0]

    @classmethod
    def from_ids(cls, sequences: Sequence[Sequence[int]], max_len: int = None):
        """
        Pad the sequences to the longest (or to max_len)

        """
        lengths = np.array([len(s) for s in sequences], dtype=np.int64)
        if max_len is None:
            max_len = int(lengths.max()) if len(lengths) else 0
        if np.any(lengths > max_len):
            raise ValueError(
                "Sequence of length %d exceeds max_len %d" % (lengths.max(), max_len)
            )
        token_ids = np.full((len(sequences), max_len), PAD, dtype=np.int64)
        for i, s in enumerate(sequences):
            token_ids[i, : len(s)] = s
        return cls(token_ids, lengths)

    @classmethod
    def from_texts(cls, texts: Sequence[str], vocab: Vocabulary, max_len: int = None):
        return cls.from_ids([tokenize(t, vocab) for t in texts], max_len)


class TextEncoder(coca3d.nn.Module):
    """
    The text transformer: token and learned absolute position embeddings,
    bidirectional blocks and [CLS] pooling. Frozen after seeded
    initialisation.

    """

    def __init__(
        self,
        config: coca3d.config.TextEncoder,
        vocab_size: int,
        rng: np.random.Generator,
    ):
        self.max_len = config.max_len
        self.token_embedding = Parameter(
            rng.normal(0, 1, size=(vocab_size, config.model_dim))
        )
        self.positions = Parameter(
            rng.normal(0, 0.1, size=(config.max_len, config.model_dim))
        )
        self.transformer = coca3d.nn.Transformer(
            config.model_dim, config.layers, config.heads, config.mlp_ratio, rng
        )

    @property
    def dim(self) -> int:
        return self.transformer.dim

    @property
    def vocab_size(self) -> int:
        return self.token_embedding.shape[0]

    def encode_sequence(self, ids: np.ndarray) -> Tensor:
        """
        Encode one unpadded sequence and return the output row at position 0

        """
        if len(ids) > self.max_len:
            raise ValueError(
                "Sequence of length %d exceeds max_len %d" % (len(ids), self.max_len)
            )
        x = T.take(self.token_embedding, ids) + self.positions[: len(ids)]
        out = self.transformer(x.reshape(1, len(ids), self.dim))
        return out[0, 0]

    def forward(self, batch: TextBatch) -> Tensor:
        return encode_text(batch, self)


def encode_text(batch: TextBatch, encoder: TextEncoder) -> Tensor:
    """
    Encode a batch and pool the [CLS] row of every sequence

    Each sequence is encoded on its own unpadded prefix so PAD positions
    take no part in attention and cannot change the result.

    Args:
        batch: The text batch
        encoder: The text encoder

    Returns:
        The (B, D_t) pooled features, also stored as batch.cls_feature

    """
    rows = [
        encoder.encode_sequence(batch.token_ids[b, : batch.lengths[b]])
        for b in range(len(batch))
    ]
    batch.cls_feature = T.stack(rows, axis=0)
    return batch.cls_feature
