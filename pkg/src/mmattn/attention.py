"""Modality-specific attention with the four parameter-sharing wirings.

The wirings differ only in which projections the text and image paths
share:

====  =================  =================  ============================
name  encoder_dependent  decoder_dependent  distinct per modality
====  =================  =================  ============================
A     False              False              nothing
B     True               False              ``W_C``, ``U_A``
C     False              True               ``W_D``
D     True               True               ``W_C``, ``U_A``, ``W_D``
====  =================  =================  ============================

Sharing is by object identity, so an optimizer update made through one
modality is seen by the other.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor

MASK_LOGIT = -1e9


@dataclass(frozen=True)
class AttentionWiring:
    encoder_dependent: bool = False
    decoder_dependent: bool = False

    @property
    def label(self) -> str:
        return "ABCD"[int(self.encoder_dependent) + 2 * int(self.decoder_dependent)]

    @classmethod
    def from_label(cls, label: str) -> "AttentionWiring":
        idx = "ABCD".index(label.upper())
        return cls(encoder_dependent=bool(idx & 1), decoder_dependent=bool(idx & 2))


@dataclass
class AttentionSet:
    """Projections used to score one annotation set.

    ``W_C`` is (annotation width, H), ``U_A`` is (H, 1) and ``W_D`` is
    (decoder width, H).
    """

    W_C: Tensor
    U_A: Tensor
    W_D: Tensor

    @property
    def hidden(self) -> int:
        return self.U_A.shape[0]


@dataclass
class AttentionParams:
    wiring: AttentionWiring
    txt: AttentionSet
    im: AttentionSet

    def named(self, prefix: str = "att"):
        """Yield ``(name, tensor)`` once per distinct parameter object."""
        enc = self.wiring.encoder_dependent
        dec = self.wiring.decoder_dependent
        yield (f"{prefix}.txt.W_C" if enc else f"{prefix}.W_C"), self.txt.W_C
        yield (f"{prefix}.txt.U_A" if enc else f"{prefix}.U_A"), self.txt.U_A
        yield (f"{prefix}.txt.W_D" if dec else f"{prefix}.W_D"), self.txt.W_D
        if enc:
            yield f"{prefix}.im.W_C", self.im.W_C
            yield f"{prefix}.im.U_A", self.im.U_A
        if dec:
            yield f"{prefix}.im.W_D", self.im.W_D

    def count(self) -> int:
        return int(sum(t.size for _, t in self.named()))


def param_count(wiring: AttentionWiring, ctx_dim: int, dec_dim: int, hidden: int) -> int:
    """Closed-form trainable scalar count for a wiring with equal annotation widths."""
    scorer = ctx_dim * hidden + hidden
    proj = dec_dim * hidden
    return scorer * (2 if wiring.encoder_dependent else 1) + proj * (2 if wiring.decoder_dependent else 1)


def build_variant(
    wiring: AttentionWiring,
    ctx_dim: int,
    dec_dim: int,
    hidden: int | None = None,
    im_ctx_dim: int | None = None,
    init=None,
) -> AttentionParams:
    """Allocate attention parameters honouring the wiring's aliasing.

    ``init(shape) -> ndarray`` supplies initial values (zeros by default).
    ``im_ctx_dim`` may differ from ``ctx_dim`` only when the scorer is
    not shared.
    """
    hidden = ctx_dim if hidden is None else hidden
    im_ctx_dim = ctx_dim if im_ctx_dim is None else im_ctx_dim
    if im_ctx_dim != ctx_dim and not wiring.encoder_dependent:
        raise DimensionError(
            f"shared W_C needs equal annotation widths, got {ctx_dim} (text) and {im_ctx_dim} (image)"
        )
    make = init or (lambda shape: np.zeros(shape))

    def new(shape):
        return Tensor(make(shape), requires_grad=True)

    W_C = new((ctx_dim, hidden))
    U_A = new((hidden, 1))
    W_D = new((dec_dim, hidden))
    txt = AttentionSet(W_C, U_A, W_D)
    if wiring.encoder_dependent:
        im_WC, im_UA = new((im_ctx_dim, hidden)), new((hidden, 1))
    else:
        im_WC, im_UA = W_C, U_A
    im_WD = new((dec_dim, hidden)) if wiring.decoder_dependent else W_D
    return AttentionParams(wiring, txt, AttentionSet(im_WC, im_UA, im_WD))


def project_annotations(p: AttentionSet, A: Tensor) -> Tensor:
    """``W_C`` applied to every annotation row; (B, K, 2D) -> (B, K, H).

    This term does not depend on the decoder state, so callers compute it
    once per sentence.
    """
    B, K, W = A.shape
    if W != p.W_C.shape[0]:
        raise DimensionError(f"attend: annotations of width {W} vs W_C {p.W_C.shape}")
    return T.reshape(T.matmul(T.reshape(A, (B * K, W)), p.W_C), (B, K, p.hidden))


def attend(p: AttentionSet, h1: Tensor, A: Tensor, mask=None, projected: Tensor | None = None) -> Tensor:
    """Attention weights over the K annotations of each batch row.

    ``h1`` is (B, D_dec), ``A`` is (B, K, 2D) and ``mask`` (B, K) marks
    valid positions. 1-d ``h1`` with 2-d ``A`` is accepted for a single
    sentence and yields a (K,) vector.
    """
    single = h1.ndim == 1
    if single:
        h1 = T.reshape(h1, (1, -1))
        A = T.reshape(A, (1,) + A.shape)
        if mask is not None:
            mask = np.asarray(mask)[None, :]
    B, K, _ = A.shape
    if h1.shape != (B, p.W_D.shape[0]):
        raise DimensionError(f"attend: decoder state {h1.shape} vs W_D {p.W_D.shape} for batch {B}")
    keep = np.ones((B, K), dtype=bool) if mask is None else np.asarray(mask).astype(bool)
    if keep.shape != (B, K):
        raise DimensionError(f"attend: mask {keep.shape} vs annotations {(B, K)}")
    if not keep.any(axis=1).all():
        raise ContractError("attend: every annotation of some row is masked")
    if projected is None:
        projected = project_annotations(p, A)
    H = p.hidden
    dec = T.repeat(T.matmul(h1, p.W_D), K, axis=1)  # (B, K, H)
    hidden = T.tanh(dec + projected)
    scores = T.reshape(T.matmul(T.reshape(hidden, (B * K, H)), p.U_A), (B, K))
    alpha = T.softmax(T.masked_fill(scores, keep, MASK_LOGIT))
    return T.reshape(alpha, (K,)) if single else alpha


def context(alpha: Tensor, A: Tensor) -> Tensor:
    """Weighted sum of annotation rows: (B, K) x (B, K, W) -> (B, W)."""
    single = alpha.ndim == 1
    if single:
        alpha = T.reshape(alpha, (1, -1))
        A = T.reshape(A, (1,) + A.shape)
    if A.ndim != 3 or alpha.shape != A.shape[:2]:
        raise DimensionError(f"context: weights {alpha.shape} vs annotations {A.shape}")
    weighted = T.repeat(alpha, A.shape[2], axis=2) * A
    c = T.sum(weighted, axis=1)
    return T.reshape(c, (-1,)) if single else c
