"""Bidirectional GRU text encoder and linear visual projection."""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from . import tensor as T
from .tensor import ContractError, DimensionError, Tensor


@dataclass
class GruParams:
    """Gate weights of one GRU. Row-vector convention: ``x @ W_z``."""

    W_z: Tensor
    W_r: Tensor
    W_h: Tensor
    U_z: Tensor
    U_r: Tensor
    U_h: Tensor
    b_z: Tensor
    b_r: Tensor
    b_h: Tensor

    @property
    def input_size(self) -> int:
        return self.W_z.shape[0]

    @property
    def hidden_size(self) -> int:
        return self.U_z.shape[0]

    def named(self, prefix: str):
        for f in fields(self):
            yield f"{prefix}.{f.name}", getattr(self, f.name)

    @classmethod
    def zeros(cls, input_size: int, hidden_size: int) -> "GruParams":
        w = {k: Tensor(np.zeros((input_size, hidden_size)), requires_grad=True) for k in ("W_z", "W_r", "W_h")}
        u = {k: Tensor(np.zeros((hidden_size, hidden_size)), requires_grad=True) for k in ("U_z", "U_r", "U_h")}
        b = {k: Tensor(np.zeros(hidden_size), requires_grad=True) for k in ("b_z", "b_r", "b_h")}
        return cls(**w, **u, **b)


def _affine(x: Tensor, W: Tensor, h: Tensor, U: Tensor, b: Tensor) -> Tensor:
    return T.matmul(x, W) + T.matmul(h, U) + T.repeat(b, x.shape[0], axis=0)


def gru_step(p: GruParams, x: Tensor, h_prev: Tensor) -> Tensor:
    """One GRU update for a batch of row vectors.

    ``x`` is (B, input) and ``h_prev`` is (B, hidden); 1-d inputs are
    treated as a batch of one and a 1-d result is returned.
    """
    squeeze = x.ndim == 1
    if squeeze:
        x = T.reshape(x, (1, -1))
        h_prev = T.reshape(h_prev, (1, -1))
    if x.shape[1] != p.input_size or h_prev.shape[1] != p.hidden_size or x.shape[0] != h_prev.shape[0]:
        raise DimensionError(
            f"gru_step: input {x.shape} / state {h_prev.shape} do not fit "
            f"cell ({p.input_size} -> {p.hidden_size})"
        )
    z = T.sigmoid(_affine(x, p.W_z, h_prev, p.U_z, p.b_z))
    r = T.sigmoid(_affine(x, p.W_r, h_prev, p.U_r, p.b_r))
    cand = T.tanh(_affine(x, p.W_h, r * h_prev, p.U_h, p.b_h))
    h = T.one_minus(z) * h_prev + z * cand
    return T.reshape(h, (-1,)) if squeeze else h


def encode_text(src_ids, embeddings: Tensor, fwd: GruParams, bwd: GruParams, mask=None) -> Tensor:
    """Annotate each source position with ``[forward state ; backward state]``.

    ``src_ids`` is (B, N) (or (N,) for a single sentence) and ``mask`` marks
    real tokens. Both directions start from zero; the backward pass holds
    its zero state across trailing padding so each sentence's reverse
    recurrence starts at its own last token. Returns (B, N, 2D), or (N, 2D)
    for 1-d input.
    """
    ids = np.asarray(src_ids, dtype=np.int64)
    single = ids.ndim == 1
    if single:
        ids = ids[None, :]
    B, N = ids.shape
    if N == 0:
        raise ContractError("encode_text: empty source sequence")
    if fwd.hidden_size != bwd.hidden_size:
        raise DimensionError("encode_text: forward and backward GRUs differ in hidden size")
    m = np.ones((B, N)) if mask is None else np.asarray(mask, dtype=np.float64).reshape(B, N)
    D = fwd.hidden_size
    x = T.embed(embeddings, ids)  # (B, N, E)
    steps = [T.select(x, i, axis=1) for i in range(N)]

    h = Tensor(np.zeros((B, D)))
    forward_states = []
    for i in range(N):
        # forward states past the end of a sentence are never read unmasked
        h = gru_step(fwd, steps[i], h)
        forward_states.append(h)

    h = Tensor(np.zeros((B, D)))
    backward_states = [None] * N
    for i in reversed(range(N)):
        new = gru_step(bwd, steps[i], h)
        if m[:, i].all():
            h = new
        else:
            keep = np.repeat(m[:, i : i + 1], D, axis=1)
            h = new * keep + h * (1.0 - keep)
        backward_states[i] = h

    rows = [T.concat([f, b], axis=1) for f, b in zip(forward_states, backward_states)]
    A = T.concat([T.reshape(r, (B, 1, 2 * D)) for r in rows], axis=1)
    return T.reshape(A, (N, 2 * D)) if single else A


def encode_image(features, W_im: Tensor) -> Tensor:
    """Project (R, C) or (B, R, C) feature maps to annotation width with ``W_im``."""
    F = T.as_tensor(features)
    C = F.shape[-1]
    if W_im.ndim != 2 or W_im.shape[0] != C:
        raise DimensionError(f"encode_image: features with {C} channels vs projection {W_im.shape}")
    if F.ndim == 2:
        return T.matmul(F, W_im)
    B, R, _ = F.shape
    flat = T.matmul(T.reshape(F, (B * R, C)), W_im)
    return T.reshape(flat, (B, R, W_im.shape[1]))
