"""Synthetic image-grounded parallel corpus.

Each target sentence carries one attribute word that never appears on the
source side. The attribute is written into the feature map as a distinct
channel pattern at a random region, so only a model that reads the image
can predict it. Every other target word is a deterministic translation of
a source word.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .corpus import Dataset, Vocabulary, build_dataset

SUBJECTS = [
    ("dog", "hund"), ("cat", "katze"), ("man", "mann"), ("woman", "frau"),
    ("boy", "junge"), ("girl", "mädchen"), ("bird", "vogel"), ("horse", "pferd"),
]
VERBS = [
    ("runs", "rennt"), ("sits", "sitzt"), ("jumps", "springt"),
    ("walks", "geht"), ("sleeps", "schläft"), ("plays", "spielt"),
]
PLACES = [
    ("in the park", "im park"), ("on the street", "auf der straße"),
    ("near the water", "am wasser"), ("in the snow", "im schnee"),
    ("on the grass", "auf dem gras"),
]
ATTRIBUTES = ["rot", "blau", "grün", "gelb", "schwarz", "weiß", "braun", "grau"]

# target position of the attribute word: "ein <attr> ..."
ATTRIBUTE_POSITION = 1


@dataclass
class SyntheticCorpus:
    src: list[str]
    tgt: list[str]
    image_ids: list[str]
    features: dict[str, np.ndarray]
    meta: list[dict]

    def dataset(self, src_vocab: Vocabulary | None = None, tgt_vocab: Vocabulary | None = None) -> Dataset:
        return build_dataset(
            self.src, self.tgt, self.image_ids, self.features,
            src_vocab=src_vocab, tgt_vocab=tgt_vocab, meta=self.meta,
        )


def attribute_patterns(num_attributes: int, channels: int) -> np.ndarray:
    """One unit-amplitude channel pattern per attribute (cycled one-hot codes)."""
    if num_attributes > channels:
        raise ValueError(f"{num_attributes} attributes need at least as many channels, got {channels}")
    return np.eye(channels)[:num_attributes]


def source_sentences() -> list[tuple[str, str]]:
    """Every (source, attribute-free target template) combination."""
    out = []
    for (s_en, s_de), (v_en, v_de), (p_en, p_de) in itertools.product(SUBJECTS, VERBS, PLACES):
        out.append((f"a {s_en} {v_en} {p_en}", "ein {attr} " + f"{s_de} {v_de} {p_de}"))
    return out


def _render(rng, pattern: np.ndarray, regions: int, noise: float) -> tuple[np.ndarray, int]:
    channels = pattern.shape[0]
    fm = rng.uniform(0.0, noise, size=(regions, channels))
    where = int(rng.integers(regions))
    fm[where] += pattern
    return fm, where


def _items(rng, sentences, attrs, patterns, regions, noise, prefix, start):
    src, tgt, ids, feats, meta = [], [], [], {}, []
    for k, ((s, t), a) in enumerate(zip(sentences, attrs)):
        image_id = f"{prefix}{start + k:06d}"
        fm, where = _render(rng, patterns[a], regions, noise)
        src.append(s)
        tgt.append(t.format(attr=ATTRIBUTES[a]))
        ids.append(image_id)
        feats[image_id] = fm
        meta.append({"attribute": int(a), "region": where})
    return SyntheticCorpus(src, tgt, ids, feats, meta)


def generate(
    n_pairs: int = 500,
    num_attributes: int = 4,
    regions: int = 16,
    channels: int = 8,
    noise: float = 0.2,
    heldout_sources: int = 40,
    seed: int = 0,
) -> tuple[SyntheticCorpus, SyntheticCorpus]:
    """Return ``(train, heldout)`` corpora.

    The held-out split uses source sentences absent from training and
    pairs each of them with every attribute, so attributes are exactly
    balanced per source sentence.
    """
    rng = np.random.default_rng(seed)
    patterns = attribute_patterns(num_attributes, channels)
    pool = source_sentences()
    order = rng.permutation(len(pool))
    held = [pool[i] for i in order[:heldout_sources]]
    train_pool = [pool[i] for i in order[heldout_sources:]]

    picks = rng.integers(len(train_pool), size=n_pairs)
    train_sent = [train_pool[i] for i in picks]
    train_attr = rng.integers(num_attributes, size=n_pairs)
    train = _items(rng, train_sent, train_attr, patterns, regions, noise, "tr", 0)

    held_sent = [s for s in held for _ in range(num_attributes)]
    held_attr = [a for _ in held for a in range(num_attributes)]
    heldout = _items(rng, held_sent, held_attr, patterns, regions, noise, "ho", 0)
    return train, heldout


def attribute_ids(tgt_vocab: Vocabulary, num_attributes: int) -> list[int]:
    return [tgt_vocab.stoi[w] for w in ATTRIBUTES[:num_attributes]]
