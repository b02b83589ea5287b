"""Greedy and beam-search decoding, and best-source selection."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import tensor as T
from .corpus import BOS, EOS, PAD, UNK
from .decoder import CgruState
from .tensor import ContractError, Tensor


class BeamConfigError(ValueError):
    pass


@dataclass
class Hypothesis:
    tokens: list[int]
    log_prob: float
    complete: bool
    unk_count: int = 0
    alpha_txt: list[np.ndarray] = field(default_factory=list, repr=False)
    alpha_im: list[np.ndarray] = field(default_factory=list, repr=False)

    def __post_init__(self):
        self.unk_count = sum(1 for t in self.tokens if t == UNK)

    @property
    def steps(self) -> int:
        """Emitted tokens including a terminating EOS."""
        return len(self.tokens) + int(self.complete)

    @property
    def normalized(self) -> float:
        return self.log_prob / max(self.steps, 1)

    def score(self, length_norm: bool) -> float:
        return self.normalized if length_norm else self.log_prob


@dataclass
class BeamConfig:
    beam_size: int = 12
    max_len: int = 50
    length_norm: bool = True

    def validate(self) -> None:
        if self.beam_size < 1:
            raise BeamConfigError(f"beam_size must be >= 1, got {self.beam_size}")
        if self.max_len < 1:
            raise BeamConfigError(f"max_len must be >= 1, got {self.max_len}")


def _emittable_log_probs(logits: np.ndarray) -> np.ndarray:
    """Log-softmax over the full vocabulary with PAD and BOS made unreachable."""
    z = logits - logits.max(axis=-1, keepdims=True)
    lp = z - np.log(np.exp(z).sum(axis=-1, keepdims=True))
    lp[..., PAD] = -np.inf
    lp[..., BOS] = -np.inf
    return lp


def _encode_one(model, src_ids, features):
    src = np.asarray(src_ids, dtype=np.int64)[None, :]
    mask = np.ones_like(src, dtype=bool)
    feats = None if features is None else np.asarray(features, dtype=np.float64)[None]
    return model.prepare(model.encode(src, mask, feats))


def _gather_state(state: CgruState, idx) -> CgruState:
    return CgruState(Tensor(state.h1.data[idx]), Tensor(state.h2.data[idx]),
                     None if state.first_h1 is None else Tensor(state.first_h1.data[idx]))


def beam_search(model, src_ids, features, cfg: BeamConfig | None = None, keep_attention: bool = False) -> Hypothesis:
    """Left-to-right beam search for one source sentence.

    Each step expands every live hypothesis over all emittable tokens and
    keeps the ``beam_size`` best by cumulative log-probability. Those that
    end in EOS leave the beam as complete; the rest stay live. Hypotheses
    still live after ``max_len`` steps are returned as incomplete.
    """
    cfg = cfg or BeamConfig()
    cfg.validate()
    finished: list[Hypothesis] = []
    with T.no_grad():
        ann = _encode_one(model, src_ids, features)
        state = model.init_state(ann)
        tokens: list[list[int]] = [[]]
        scores = np.zeros(1)
        att_t: list[list[np.ndarray]] = [[]]
        att_i: list[list[np.ndarray]] = [[]]
        prev = np.array([BOS])
        for step in range(cfg.max_len):
            live = len(tokens)
            out = model.decode_step(state, prev, ann.rows(np.zeros(live, dtype=np.int64)))
            lp = _emittable_log_probs(out.logits.data)
            cand = (scores[:, None] + lp).reshape(-1)
            V = lp.shape[1]
            k = min(cfg.beam_size, int(np.isfinite(cand).sum()))
            # stable sort keeps lower (row, token) index first among ties
            top = np.argsort(-cand, kind="stable")[:k]
            last = step == cfg.max_len - 1
            keep_rows, keep_tok, keep_tokens, keep_scores, keep_at, keep_ai = [], [], [], [], [], []
            for flat in top:
                row, tok = divmod(int(flat), V)
                seq = tokens[row] + ([] if tok == EOS else [tok])
                at = att_t[row] + [out.alpha_txt.data[row].copy()] if keep_attention else []
                ai = (att_i[row] + [out.alpha_im.data[row].copy()]
                      if keep_attention and out.alpha_im is not None else [])
                if tok == EOS or last:
                    finished.append(Hypothesis(seq, float(cand[flat]), tok == EOS, alpha_txt=at, alpha_im=ai))
                    continue
                keep_rows.append(row)
                keep_tok.append(tok)
                keep_tokens.append(seq)
                keep_scores.append(float(cand[flat]))
                keep_at.append(at)
                keep_ai.append(ai)
            if not keep_rows:
                break
            state = _gather_state(out.state, keep_rows)
            tokens, scores, att_t, att_i = keep_tokens, np.array(keep_scores), keep_at, keep_ai
            prev = np.array(keep_tok)
    best = max(enumerate(finished), key=lambda kv: (kv[1].score(cfg.length_norm), -kv[0]))[1]
    return best


def greedy_decode(model, src_batch, src_mask, features, max_len: int = 50) -> list[Hypothesis]:
    """Batched argmax decoding over emittable tokens."""
    with T.no_grad():
        ann = model.prepare(model.encode(src_batch, src_mask, features))
        B = ann.batch_size
        state = model.init_state(ann)
        prev = np.full(B, BOS)
        tokens: list[list[int]] = [[] for _ in range(B)]
        scores = np.zeros(B)
        done = np.zeros(B, dtype=bool)
        complete = np.zeros(B, dtype=bool)
        for _ in range(max_len):
            out = model.decode_step(state, prev, ann)
            lp = _emittable_log_probs(out.logits.data)
            choice = lp.argmax(axis=1)
            for b in range(B):
                if done[b]:
                    continue
                scores[b] += lp[b, choice[b]]
                if choice[b] == EOS:
                    done[b] = complete[b] = True
                else:
                    tokens[b].append(int(choice[b]))
            if done.all():
                break
            state = out.state
            prev = np.where(done, EOS, choice)
    return [Hypothesis(tokens[b], float(scores[b]), bool(complete[b])) for b in range(B)]


def greedy_translate(model, dataset, max_len: int = 50, batch_size: int = 64) -> list[Hypothesis]:
    from .corpus import batch_iter

    out: list[Hypothesis] = []
    for batch in batch_iter(dataset, batch_size):
        out.extend(greedy_decode(model, batch.src, batch.src_mask, batch.features, max_len))
    return out


def best_source_select(hyps: Sequence[Hypothesis], length_norm: bool = True) -> Hypothesis:
    """Fewest UNK tokens first, then highest (length-normalised) log-prob; ties keep input order."""
    if not hyps:
        raise ContractError("best_source_select: no hypotheses")
    return min(enumerate(hyps), key=lambda kv: (kv[1].unk_count, -kv[1].score(length_norm), kv[0]))[1]
