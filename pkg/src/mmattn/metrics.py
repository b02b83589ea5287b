"""Corpus-level BLEU with clipped n-gram counts and brevity penalty."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import Sequence

from .tensor import ContractError


@dataclass
class BleuResult:
    score: float  # in [0, 1]
    precisions: list[float]
    brevity_penalty: float
    hyp_len: int
    ref_len: int
    matches: list[int]
    totals: list[int]


def ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def closest_ref_length(hyp_len: int, refs: Sequence[Sequence[str]]) -> int:
    # ties go to the shorter reference
    return min((abs(len(r) - hyp_len), len(r)) for r in refs)[1]


def corpus_bleu(pairs: Sequence[tuple[Sequence[str], Sequence[Sequence[str]]]], max_n: int = 4) -> BleuResult:
    """BLEU over ``(hypothesis, [references...])`` pairs, without smoothing."""
    if not pairs:
        raise ContractError("corpus_bleu: empty hypothesis set")
    matches = [0] * max_n
    totals = [0] * max_n
    hyp_len = ref_len = 0
    for hyp, refs in pairs:
        if not refs:
            raise ContractError("corpus_bleu: hypothesis without references")
        hyp_len += len(hyp)
        ref_len += closest_ref_length(len(hyp), refs)
        for n in range(1, max_n + 1):
            counts = ngrams(hyp, n)
            best: Counter = Counter()
            for r in refs:
                best |= ngrams(r, n)
            matches[n - 1] += sum(min(c, best[g]) for g, c in counts.items())
            totals[n - 1] += max(len(hyp) - n + 1, 0)
    precisions = [m / t if t else 0.0 for m, t in zip(matches, totals)]
    bp = math.exp(min(0.0, 1.0 - ref_len / hyp_len)) if hyp_len else 0.0
    if min(precisions) == 0.0:
        score = 0.0
    else:
        score = bp * math.exp(sum(math.log(p) for p in precisions) / max_n)
    return BleuResult(score, precisions, bp, hyp_len, ref_len, matches, totals)


def bleu_score(hyps: Sequence[Sequence[str]], refs: Sequence[Sequence[Sequence[str]]], max_n: int = 4) -> float:
    return corpus_bleu(list(zip(hyps, refs)), max_n).score
