"""Shared builders for the tests."""

import math


from mmattn import tensor as T
from mmattn.corpus import Batch, ParallelExample, make_batch
from mmattn.encoder import GruParams
from mmattn.model import ModelConfig, MultimodalNMT

ACCEPTANCE: list[str] = []


def record(criterion: int, ok: bool, detail: str) -> None:
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE.append(line)
    print(line)


def tiny_config(**kw) -> ModelConfig:
    """4-unit model with a 6-entry target vocabulary and a 2x2 region grid of 3 channels."""
    base = dict(src_vocab=7, tgt_vocab=6, emb=4, enc_hidden=4, dec_hidden=4, channels=3)
    base.update(kw)
    return ModelConfig(**base)


def randomize(model: MultimodalNMT, rng, scale: float = 0.5) -> MultimodalNMT:
    """Replace every parameter (biases included) with random values."""
    for _, t in model.named_parameters():
        t.data[...] = rng.uniform(-scale, scale, size=t.shape)
    return model


def tiny_batch(rng, regions: int = 4, channels: int = 3, src_vocab: int = 7, tgt_vocab: int = 6) -> Batch:
    examples = [
        ParallelExample(list(rng.integers(4, src_vocab, size=3)), list(rng.integers(3, tgt_vocab, size=2)), "a"),
        ParallelExample(list(rng.integers(4, src_vocab, size=2)), list(rng.integers(3, tgt_vocab, size=3)), "b"),
    ]
    feats = {k: rng.uniform(-1, 1, size=(regions, channels)) for k in ("a", "b")}
    return make_batch(examples, feats)


def scalar_gru(p: GruParams, x, h):
    """Unit-by-unit recomputation of the update, reset, candidate and output formulas."""
    sig = lambda v: 1.0 / (1.0 + math.exp(-v))  # noqa: E731
    W = {k: getattr(p, k).data for k in ("W_z", "W_r", "W_h", "U_z", "U_r", "U_h", "b_z", "b_r", "b_h")}
    n_in, D = W["W_z"].shape
    z = [sig(sum(x[i] * W["W_z"][i, j] for i in range(n_in)) + sum(h[k] * W["U_z"][k, j] for k in range(D)) + W["b_z"][j])
         for j in range(D)]
    r = [sig(sum(x[i] * W["W_r"][i, j] for i in range(n_in)) + sum(h[k] * W["U_r"][k, j] for k in range(D)) + W["b_r"][j])
         for j in range(D)]
    cand = [math.tanh(sum(x[i] * W["W_h"][i, j] for i in range(n_in))
                      + sum(r[k] * h[k] * W["U_h"][k, j] for k in range(D)) + W["b_h"][j])
            for j in range(D)]
    return [(1 - z[j]) * h[j] + z[j] * cand[j] for j in range(D)]


# Central differences of an O(1) loss carry ~1e-11 of round-off at step 1e-5,
# so relative errors are taken against max(|a|, |b|, GRAD_FLOOR).
GRAD_FLOOR = 1e-6


def model_gradient_errors(model: MultimodalNMT, batch: Batch, l2: float = 0.0, step: float = 1e-5) -> dict[str, float]:
    """Worst relative error between backward() and central differences, per parameter."""
    from mmattn.trainer import loss

    model.zero_grad()
    loss(batch, model, l2).backward()
    analytic = {n: t.grad.copy() for n, t in model.named_parameters()}
    model.zero_grad()

    def f():
        with T.no_grad():
            return loss(batch, model, l2).item()

    return {
        n: float(T.relative_error(analytic[n], T.numerical_grad(f, t, step), GRAD_FLOOR).max())
        for n, t in model.named_parameters()
    }
