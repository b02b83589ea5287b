"""Conditional GRU decoder with multimodal context fusion."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import tensor as T
from .attention import AttentionParams, attend, context, project_annotations
from .encoder import GruParams, gru_step
from .tensor import ContractError, DimensionError, Tensor


class FusionKind(str, Enum):
    SUM = "sum"
    CONCAT = "concat"


@dataclass
class CgruState:
    """Hidden states of the two stacked GRUs.

    ``first_h1`` caches ``g1`` already advanced on BOS by :func:`init_state`;
    the first :func:`decode_step` consumes it instead of recomputing.
    """

    h1: Tensor
    h2: Tensor
    first_h1: Tensor | None = None


@dataclass
class DecoderParams:
    W_init: Tensor
    b_init: Tensor
    g1: GruParams
    g2: GruParams
    att: AttentionParams
    fusion: FusionKind
    W_fus: Tensor | None
    b_fus: Tensor | None
    L_s: Tensor
    L_c: Tensor
    L_o: Tensor
    tgt_emb: Tensor


@dataclass
class Annotations:
    """Encoder output for a batch, plus the per-sentence attention projections."""

    txt: Tensor  # (B, N, 2D)
    txt_mask: np.ndarray  # (B, N)
    im: Tensor | None = None  # (B, R, P)
    im_mask: np.ndarray | None = None  # (B, R)
    txt_proj: Tensor | None = None
    im_proj: Tensor | None = None

    @property
    def batch_size(self) -> int:
        return self.txt.shape[0]

    def rows(self, index) -> "Annotations":
        """Gather batch rows (inference only; drops graph links)."""
        idx = np.asarray(index, dtype=np.int64)

        def take(t):
            return None if t is None else Tensor(t.data[idx])

        return Annotations(
            take(self.txt),
            self.txt_mask[idx],
            take(self.im),
            None if self.im_mask is None else self.im_mask[idx],
            take(self.txt_proj),
            take(self.im_proj),
        )


@dataclass
class StepOutput:
    state: CgruState
    logits: Tensor
    alpha_txt: Tensor
    alpha_im: Tensor | None


def masked_mean(A: Tensor, mask: np.ndarray) -> Tensor:
    """Mean over valid rows: (B, N, W) with mask (B, N) -> (B, W)."""
    B, N, W = A.shape
    m = np.asarray(mask, dtype=np.float64)
    counts = m.sum(axis=1)
    if np.any(counts == 0):
        raise ContractError("masked_mean: sentence with no tokens")
    weights = np.repeat((m / counts[:, None])[:, :, None], W, axis=2)
    return T.sum(A * weights, axis=1)


def init_state(A_txt: Tensor, txt_mask, W_init: Tensor, b_init: Tensor, g1: GruParams, bos_emb: Tensor) -> CgruState:
    """Initial decoder state from the mean textual annotation.

    ``h1_0 = tanh(mean(A_txt) @ W_init + b_init)``; ``g1`` is advanced once
    on the BOS embedding and the result seeds ``h2``.
    """
    mean = masked_mean(A_txt, txt_mask)
    B = mean.shape[0]
    h1_0 = T.tanh(T.matmul(mean, W_init) + T.repeat(b_init, B, axis=0))
    if bos_emb.ndim == 1:
        bos_emb = T.repeat(bos_emb, B, axis=0)
    h1_1 = gru_step(g1, bos_emb, h1_0)
    return CgruState(h1=h1_0, h2=h1_1, first_h1=h1_1)


def fuse(kind: FusionKind | str, c_txt: Tensor, c_im: Tensor | None, W_fus: Tensor | None = None, b_fus: Tensor | None = None) -> Tensor:
    """Merge modality contexts. ``c_im=None`` means the image path is absent."""
    kind = FusionKind(kind)
    if kind is FusionKind.SUM:
        if c_im is None:
            return T.tanh(c_txt)
        if c_txt.shape != c_im.shape:
            raise DimensionError(f"SUM fusion needs equal widths, got {c_txt.shape} and {c_im.shape}")
        return T.tanh(c_txt + c_im)
    if W_fus is None or b_fus is None:
        raise ContractError("CONCAT fusion needs W_fus and b_fus")
    joint = c_txt if c_im is None else T.concat([c_txt, c_im], axis=-1)
    squeeze = joint.ndim == 1
    if squeeze:
        joint = T.reshape(joint, (1, -1))
    if joint.shape[1] != W_fus.shape[0]:
        raise DimensionError(f"CONCAT fusion: joint context {joint.shape} vs W_fus {W_fus.shape}")
    c = T.tanh(T.matmul(joint, W_fus) + T.repeat(b_fus, joint.shape[0], axis=0))
    return T.reshape(c, (-1,)) if squeeze else c


def prepare(p: DecoderParams, ann: Annotations) -> Annotations:
    """Fill in the state-independent ``W_C`` projections once per batch."""
    if ann.txt_proj is None:
        ann.txt_proj = project_annotations(p.att.txt, ann.txt)
    if ann.im is not None and ann.im_proj is None:
        ann.im_proj = project_annotations(p.att.im, ann.im)
    return ann


def decode_step(p: DecoderParams, state: CgruState, y_prev, ann: Annotations) -> StepOutput:
    """Advance the decoder by one target position.

    ``y_prev`` holds the previous target ids, one per batch row; during
    training these are the reference tokens.
    """
    y_prev = np.asarray(y_prev, dtype=np.int64).reshape(-1)
    V = p.tgt_emb.shape[0]
    if y_prev.size and (y_prev.min() < 0 or y_prev.max() >= V):
        raise ContractError(f"decode_step: previous token id outside vocabulary of size {V}")
    emb = T.embed(p.tgt_emb, y_prev)
    if state.first_h1 is not None:
        h1 = state.first_h1
    else:
        h1 = gru_step(p.g1, emb, state.h1)

    prepare(p, ann)
    alpha_txt = attend(p.att.txt, h1, ann.txt, ann.txt_mask, projected=ann.txt_proj)
    c_txt = context(alpha_txt, ann.txt)
    alpha_im = None
    c_im = None
    if ann.im is not None:
        im_mask = ann.im_mask if ann.im_mask is not None else np.ones(ann.im.shape[:2], dtype=bool)
        live = np.asarray(im_mask, dtype=bool).any(axis=1)
        if live.all():
            alpha_im = attend(p.att.im, h1, ann.im, im_mask, projected=ann.im_proj)
            c_im = context(alpha_im, ann.im)
        elif live.any():
            raise ContractError("decode_step: image mask must be all-on or all-off across the batch")
        else:
            # image withdrawn: its context contributes zeros
            c_im = Tensor(np.zeros((ann.im.shape[0], ann.im.shape[2])))
    c = fuse(p.fusion, c_txt, c_im, p.W_fus, p.b_fus)
    h2 = gru_step(p.g2, c, state.h2)
    pre = T.tanh(T.matmul(h2, p.L_s) + T.matmul(c, p.L_c) + emb)
    logits = T.matmul(pre, p.L_o)
    return StepOutput(CgruState(h1=h1, h2=h2), logits, alpha_txt, alpha_im)
