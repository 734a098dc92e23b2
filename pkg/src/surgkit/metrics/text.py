"""BLEU-4, METEOR and ROUGE-1 for short free-text answers.

Tokens are lowercased words with punctuation removed. METEOR aligns exact
matches first, then Porter-stem matches; there is no synonym stage.
"""

from __future__ import annotations

import math
import string
from collections import Counter
from functools import lru_cache
from typing import Sequence

from nltk.stem.porter import PorterStemmer
from nltk.util import ngrams

from .report import MetricReport

BLEU_EPSILON = 1e-9
METEOR_ALPHA = 0.9
METEOR_BETA = 3.0
METEOR_GAMMA = 0.5

_PUNCT = str.maketrans({c: " " for c in string.punctuation})
_stemmer = PorterStemmer()


def tokenize(text: str) -> list[str]:
    return text.lower().translate(_PUNCT).split()


@lru_cache(maxsize=65536)
def _stem(word: str) -> str:
    return _stemmer.stem(word)


def bleu4(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Sentence BLEU-4 in [0, 1].

    Clipped n-gram precisions use an epsilon numerator floor, so a short answer
    that shares any n-gram scores above zero. An order for which neither side
    has n-grams (both shorter than n) is left out of the geometric mean.
    """
    if not candidate:
        return 0.0
    logs = []
    for n in range(1, 5):
        cand = Counter(ngrams(candidate, n))
        ref = Counter(ngrams(reference, n))
        total = sum(cand.values())
        if total == 0 and not ref:
            continue
        matched = sum(min(c, ref[g]) for g, c in cand.items())
        logs.append(math.log(max(matched, BLEU_EPSILON) / max(total, 1)))
    c, r = len(candidate), len(reference)
    brevity = 1.0 if c > r else math.exp(1.0 - r / c)
    return brevity * math.exp(math.fsum(logs) / len(logs))


def _align(candidate: Sequence[str], reference: Sequence[str]) -> list[tuple[int, int]]:
    pairs: list[tuple[int, int]] = []
    used_c: set[int] = set()
    used_r: set[int] = set()
    for key in (lambda w: w, _stem):
        for i, w in enumerate(candidate):
            if i in used_c:
                continue
            kw = key(w)
            for j, v in enumerate(reference):
                if j not in used_r and key(v) == kw:
                    pairs.append((i, j))
                    used_c.add(i)
                    used_r.add(j)
                    break
    return sorted(pairs)


def meteor(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """METEOR in [0, 1]: F-mean with recall weight 0.9 times a fragmentation penalty.

    The penalty is 0.5 * (chunks / matches) ** 3, except that a single
    contiguous chunk is not penalised, so identical strings score 1.
    """
    pairs = _align(candidate, reference)
    m = len(pairs)
    if m == 0:
        return 0.0
    precision = m / len(candidate)
    recall = m / len(reference)
    fmean = precision * recall / (METEOR_ALPHA * precision + (1 - METEOR_ALPHA) * recall)
    chunks = 1
    for (i0, j0), (i1, j1) in zip(pairs, pairs[1:]):
        if not (i1 == i0 + 1 and j1 == j0 + 1):
            chunks += 1
    penalty = 0.0 if chunks == 1 else METEOR_GAMMA * (chunks / m) ** METEOR_BETA
    return fmean * (1.0 - penalty)


def rouge1(candidate: Sequence[str], reference: Sequence[str]) -> float:
    """Clipped unigram recall in [0, 1]."""
    cand, ref = Counter(candidate), Counter(reference)
    return sum(min(c, cand[w]) for w, c in ref.items()) / sum(ref.values())


def text_overlap(candidate: str, reference: str) -> MetricReport:
    ref = tokenize(reference)
    if not ref:
        raise ValueError("reference must contain at least one token")
    cand = tokenize(candidate)
    return MetricReport(
        values={
            "bleu4": 100.0 * bleu4(cand, ref),
            "meteor": 100.0 * meteor(cand, ref),
            "rouge1": 100.0 * rouge1(cand, ref),
        },
        n_samples=1,
    )


def corpus_text_overlap(candidates: Sequence[str], references: Sequence[str]) -> MetricReport:
    """Mean of the per-pair scores."""
    if len(candidates) != len(references):
        raise ValueError(f"length mismatch: {len(candidates)} candidates vs {len(references)} references")
    if not references:
        raise ValueError("corpus_text_overlap needs at least one pair")
    per_pair = [text_overlap(c, r).values for c, r in zip(candidates, references)]
    keys = ("bleu4", "meteor", "rouge1")
    return MetricReport(
        values={k: math.fsum(p[k] for p in per_pair) / len(per_pair) for k in keys},
        n_samples=len(per_pair),
    )
