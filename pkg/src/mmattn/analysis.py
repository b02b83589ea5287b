"""Teacher-forced probes: attribute accuracy and attention entropy."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .corpus import Dataset, batch_iter


def attribute_accuracy(model, dataset: Dataset, position: int, batch_size: int = 64) -> float:
    """Fraction of examples whose argmax prediction at target ``position`` is the reference token."""
    hits = total = 0
    with T.no_grad():
        for batch in batch_iter(dataset, batch_size):
            _, steps = model.forward(batch, keep_steps=True)
            pred = steps[position].logits.data.argmax(axis=1)
            hits += int((pred == batch.tgt_out[:, position]).sum())
            total += batch.size
    return hits / max(total, 1)


def entropy(p: np.ndarray, mask: np.ndarray | None = None) -> np.ndarray:
    """Shannon entropy (nats) of each row of ``p``; masked entries are ignored."""
    p = np.asarray(p, dtype=np.float64)
    if mask is not None:
        p = np.where(mask, p, 0.0)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, -p * np.log(p), 0.0)
    return terms.sum(axis=-1)


@dataclass
class EntropyReport:
    txt: float  # mean entropy of text attention, nats
    im: float | None
    txt_uniform: float  # mean entropy a uniform distribution would have
    im_uniform: float | None
    steps: int

    def lines(self, label: str) -> list[str]:
        im = "n/a" if self.im is None else f"{self.im:.4f}"
        im_u = "n/a" if self.im_uniform is None else f"{self.im_uniform:.4f}"
        return [
            f"{label}\ttxt_entropy={self.txt:.4f}\ttxt_uniform={self.txt_uniform:.4f}"
            f"\tim_entropy={im}\tim_uniform={im_u}\tsteps={self.steps}"
        ]


def attention_entropy(model, dataset: Dataset, batch_size: int = 64) -> EntropyReport:
    """Mean attention entropy over all real target positions, teacher forced."""
    txt, uni, im, im_uni = [], [], [], []
    with T.no_grad():
        for batch in batch_iter(dataset, batch_size):
            _, steps = model.forward(batch, keep_steps=True)
            n_src = batch.src_mask.sum(axis=1)
            for t, out in enumerate(steps):
                live = batch.tgt_mask[:, t]
                txt.extend(entropy(out.alpha_txt.data, batch.src_mask)[live])
                uni.extend(np.log(n_src)[live])
                if out.alpha_im is not None:
                    im.extend(entropy(out.alpha_im.data)[live])
                    im_uni.extend(np.full(int(live.sum()), np.log(out.alpha_im.shape[1])))
    return EntropyReport(
        float(np.mean(txt)),
        float(np.mean(im)) if im else None,
        float(np.mean(uni)),
        float(np.mean(im_uni)) if im_uni else None,
        len(txt),
    )
