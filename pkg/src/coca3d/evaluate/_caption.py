#
# coca3d.evaluate._caption.py
#
# Copyright (C) 2019 Diamond Light Source and Rosalind Franklin Institute
#
# Author: James Parkhurst
#
# This code is distributed under the GPLv3 license, a copy of
# which is included in the root directory of this package.
#
import collections
import functools
import logging
import re
import numpy as np
from math import exp
from math import log
from math import sqrt
from nltk.stem.porter import PorterStemmer
from typing import Counter
from typing import List
from typing import Sequence
from typing import Union


__all__ = [
    "tokenize_caption",
    "ngrams",
    "bleu4",
    "rouge_l",
    "cider",
    "meteor_lite",
]


# Get the logger
logger = logging.getLogger(__name__)


Tokens = Union[str, Sequence[str]]


def tokenize_caption(text: Tokens) -> List[str]:
    """
    Lowercase, strip punctuation and split on whitespace

    Sequences of words are passed through unchanged.

    """
    if not isinstance(text, str):
        return list(text)
    return re.sub(r"[^\w\s]", " ", text.lower()).split()


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return collections.Counter(
        tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)
    )


def bleu4(candidate: Tokens, references: Sequence[Tokens]) -> float:
    """
    Sentence BLEU-4

    The geometric mean of the clipped 1..4-gram precisions times the brevity
    penalty, which uses the reference length closest to the candidate length
    (ties to the shorter). Any zero precision gives zero.

    """
    candidate = tokenize_caption(candidate)
    references = [tokenize_caption(r) for r in references]
    if len(candidate) == 0 or len(references) == 0:
        return 0.0

    # The clipped precisions
    log_precision = 0.0
    for n in range(1, 5):
        counts = ngrams(candidate, n)
        total = sum(counts.values())
        if total == 0:
            return 0.0
        max_ref: Counter = collections.Counter()
        for reference in references:
            for gram, count in ngrams(reference, n).items():
                max_ref[gram] = max(max_ref[gram], count)
        clipped = sum(min(count, max_ref[gram]) for gram, count in counts.items())
        if clipped == 0:
            return 0.0
        log_precision += log(clipped / total) / 4

    # The brevity penalty
    c = len(candidate)
    r = min((abs(len(ref) - c), len(ref)) for ref in references)[1]
    penalty = 1.0 if c > r else exp(1 - r / c)
    return penalty * exp(log_precision)


def _lcs(a: Sequence[str], b: Sequence[str]) -> int:
    table = np.zeros((len(a) + 1, len(b) + 1), dtype=np.int64)
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                table[i, j] = table[i - 1, j - 1] + 1
            else:
                table[i, j] = max(table[i - 1, j], table[i, j - 1])
    return int(table[-1, -1])


def rouge_l(candidate: Tokens, references: Sequence[Tokens], beta: float = 1.2) -> float:
    """
    The best LCS F-measure over the references

    """
    candidate = tokenize_caption(candidate)
    best = 0.0
    for reference in references:
        reference = tokenize_caption(reference)
        lcs = _lcs(candidate, reference)
        if lcs == 0:
            continue
        p = lcs / len(candidate)
        r = lcs / len(reference)
        best = max(best, (1 + beta**2) * p * r / (r + beta**2 * p))
    return best


def cider(candidates: Sequence[Tokens], references: Sequence[Sequence[Tokens]]) -> np.ndarray:
    """
    CIDEr for every candidate of a corpus

    The document frequencies come from the reference sets of the corpus.
    For each n = 1..4 the candidate and reference n-gram counts are turned
    into term frequency times log(N / df) vectors, and the cosine against
    each reference is averaged. The result is 10 times the mean over n.

    A corpus of one candidate gives every n-gram a document frequency of
    N, so every idf weight is log(1) = 0 and every score is 0.

    Args:
        candidates: The candidate captions
        references: The reference captions of each candidate

    Returns:
        The per candidate scores

    """
    if len(candidates) != len(references):
        raise ValueError("Need one reference set per candidate")
    if len(candidates) == 0:
        return np.zeros(0)
    if any(len(refs) == 0 for refs in references):
        raise ValueError("Every candidate needs at least one reference")
    candidates = [tokenize_caption(c) for c in candidates]
    references = [[tokenize_caption(r) for r in refs] for refs in references]
    N = len(candidates)
    if N == 1:
        logger.warning("CIDEr over a corpus of one candidate is always 0")

    scores = np.zeros(N)
    for n in range(1, 5):
        # The document frequency over the reference sets
        df: Counter = collections.Counter()
        for refs in references:
            df.update(set(g for r in refs for g in ngrams(r, n)))

        def vector(tokens):
            counts = ngrams(tokens, n)
            total = sum(counts.values())
            return {
                g: (c / total) * log(N / max(1, df[g])) for g, c in counts.items()
            }

        def cosine(u, v):
            nu = sqrt(sum(x * x for x in u.values()))
            nv = sqrt(sum(x * x for x in v.values()))
            if nu == 0 or nv == 0:
                return 0.0
            return sum(x * v.get(g, 0.0) for g, x in u.items()) / (nu * nv)

        for i in range(N):
            c = vector(candidates[i])
            scores[i] += np.mean([cosine(c, vector(r)) for r in references[i]])
    return 10.0 * scores / 4


# Shared stemmer
_STEMMER = PorterStemmer()


@functools.lru_cache(maxsize=None)
def _stem(word: str) -> str:
    return _STEMMER.stem(word)


def _align(candidate: List[str], reference: List[str]) -> List[tuple]:
    """
    Greedy unigram alignment, exact matches first then stem matches

    Returns:
        The (candidate index, reference index) pairs

    """
    pairs = []
    used_c = set()
    used_r = set()
    for key in [lambda w: w, _stem]:
        for i, word in enumerate(candidate):
            if i in used_c:
                continue
            for j, other in enumerate(reference):
                if j not in used_r and key(word) == key(other):
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def meteor_lite(candidate: Tokens, references: Sequence[Tokens]) -> float:
    """
    METEOR without synonym tables

    Unigrams are aligned on exact then Porter stem matches. The score is
    the 9:1 recall weighted harmonic mean times (1 - 0.5 (chunks / m)^3).
    The best reference wins.

    """
    candidate = tokenize_caption(candidate)
    best = 0.0
    for reference in references:
        reference = tokenize_caption(reference)
        pairs = _align(candidate, reference)
        m = len(pairs)
        if m == 0:
            continue
        p = m / len(candidate)
        r = m / len(reference)
        fmean = 10 * p * r / (r + 9 * p)
        chunks = 1
        for (i0, j0), (i1, j1) in zip(pairs[:-1], pairs[1:]):
            if not (i1 == i0 + 1 and j1 == j0 + 1):
                chunks += 1
        best = max(best, fmean * (1 - 0.5 * (chunks / m) ** 3))
    return best
