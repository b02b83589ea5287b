import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mmattn.metrics import bleu_score, closest_ref_length, corpus_bleu
from mmattn.tensor import ContractError


def s(text):
    return text.split()


def test_identical_hypothesis_scores_one():
    assert corpus_bleu([(s("a man rides a red bike"), [s("a man rides a red bike")])]).score == 1.0


def test_disjoint_vocabulary_scores_zero():
    assert corpus_bleu([(s("x y z w"), [s("a b c d")])]).score == 0.0


def test_clipped_unigram_example():
    res = corpus_bleu([(s("the the the"), [s("the cat")])])
    # "the" occurs once in the reference, so only one of three unigrams counts
    assert res.matches[0] == 1 and res.totals[0] == 3
    assert res.precisions[0] == 1 / 3
    assert res.precisions[1] == 0.0
    assert res.score == 0.0


def test_hand_computed_score():
    hyp, ref = s("a b c d e"), s("a b c d f g")
    res = corpus_bleu([(hyp, [ref])])
    p = [4 / 5, 3 / 4, 2 / 3, 1 / 2]
    expect = math.exp(1 - 6 / 5) * math.exp(sum(math.log(x) for x in p) / 4)
    assert abs(res.score - expect) < 1e-15


def test_closest_reference_length_prefers_shorter_on_ties():
    assert closest_ref_length(4, [s("a b c"), s("a b c d e")]) == 3
    assert closest_ref_length(4, [s("a b c d e"), s("a b")]) == 5


def test_empty_inputs():
    with pytest.raises(ContractError):
        corpus_bleu([])
    with pytest.raises(ContractError):
        corpus_bleu([(s("a"), [])])


WORDS = st.lists(st.sampled_from(list("abcde")), min_size=1, max_size=8)
CORPUS = st.lists(st.tuples(WORDS, st.lists(WORDS, min_size=1, max_size=3)), min_size=1, max_size=6)


@settings(max_examples=150, deadline=None)
@given(CORPUS, st.randoms())
def test_permutation_invariance(pairs, rnd):
    shuffled = list(pairs)
    rnd.shuffle(shuffled)
    assert corpus_bleu(shuffled).score == corpus_bleu(pairs).score


@settings(max_examples=150, deadline=None)
@given(CORPUS)
def test_duplication_invariance(pairs):
    a, b = corpus_bleu(pairs), corpus_bleu(pairs + pairs)
    assert b.score == a.score
    assert b.precisions == a.precisions and b.brevity_penalty == a.brevity_penalty


@settings(max_examples=150, deadline=None)
@given(CORPUS)
def test_score_range_and_extra_reference(pairs):
    base = corpus_bleu(pairs).score
    assert 0.0 <= base <= 1.0
    boosted = corpus_bleu([(h, refs + [list(h)]) for h, refs in pairs]).score
    assert boosted >= base


def test_bleu_score_wrapper():
    assert bleu_score([s("a b c d")], [[s("a b c d")]]) == 1.0
