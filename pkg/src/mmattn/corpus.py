"""Tokenization, vocabularies, pair filtering, feature files and batching."""

from __future__ import annotations

import string
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Sequence

import numpy as np

PAD, BOS, EOS, UNK = 0, 1, 2, 3
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>")

MIN_LEN, MAX_LEN, MAX_RATIO = 3, 50, 3.0

_PUNCT = str.maketrans("", "", string.punctuation)

FEATURE_MAGIC = "MMFEAT"
_ID_BYTES = 16


class CorpusError(ValueError):
    pass


def tokenize(line: str) -> list[str]:
    """Lowercase, drop ASCII punctuation, split on whitespace."""
    return line.lower().translate(_PUNCT).split()


class Vocabulary:
    """Token/index bijection with four fixed reserved entries."""

    def __init__(self, tokens: Sequence[str] = (), max_size: int | None = None):
        self.max_size = max_size if max_size is not None else len(tokens)
        self.itos: list[str] = list(RESERVED)
        self.stoi: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens:
            if tok in self.stoi:
                raise CorpusError(f"duplicate vocabulary entry {tok!r}")
            self.stoi[tok] = len(self.itos)
            self.itos.append(tok)

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, tok: str) -> bool:
        return tok in self.stoi

    @property
    def words(self) -> list[str]:
        return self.itos[len(RESERVED):]

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, UNK) for t in tokens]

    def decode(self, ids: Iterable[int], strip: bool = True) -> list[str]:
        out = []
        for i in ids:
            i = int(i)
            if strip and i in (PAD, BOS, EOS):
                continue
            out.append(self.itos[i])
        return out

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.words), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls([ln for ln in lines if ln])

    def __eq__(self, other) -> bool:
        return isinstance(other, Vocabulary) and self.itos == other.itos


def build_vocab(corpus: Iterable[Sequence[str]], max_size: int) -> Vocabulary:
    """Keep the ``max_size`` most frequent tokens; ties go to the earlier first occurrence."""
    if max_size < 1:
        raise CorpusError("max_size must be >= 1")
    counts: Counter[str] = Counter()
    for sent in corpus:
        counts.update(sent)
    # Counter keeps first-insertion order and sorted() is stable
    ranked = sorted(counts.items(), key=lambda kv: -kv[1])
    return Vocabulary([t for t, _ in ranked[:max_size] if t not in RESERVED], max_size=max_size)


@dataclass
class ParallelExample:
    source_ids: list[int]
    target_ids: list[int]
    image_id: str


def keep_pair(n: int, m: int) -> bool:
    if not (MIN_LEN <= n <= MAX_LEN and MIN_LEN <= m <= MAX_LEN):
        return False
    return max(n, m) <= MAX_RATIO * min(n, m)


def filter_pairs(pairs: Iterable[ParallelExample]) -> list[ParallelExample]:
    return [p for p in pairs if keep_pair(len(p.source_ids), len(p.target_ids))]


# -- feature maps ----------------------------------------------------------


@dataclass
class FeatureMap:
    image_id: str
    values: np.ndarray  # (R, C)

    @property
    def regions(self) -> int:
        return self.values.shape[0]

    @property
    def channels(self) -> int:
        return self.values.shape[1]


def write_features(path, features: dict[str, np.ndarray]) -> None:
    """Write feature maps in the MMFEAT container."""
    items = list(features.items())
    if not items:
        raise CorpusError("no feature maps to write")
    R, C = np.asarray(items[0][1]).shape
    with open(path, "wb") as fh:
        fh.write(f"{FEATURE_MAGIC} {R} {C} {len(items)}\n".encode("ascii"))
        for image_id, values in items:
            values = np.asarray(values)
            if values.shape != (R, C):
                raise CorpusError(f"feature map {image_id!r} has shape {values.shape}, expected {(R, C)}")
            raw = image_id.encode("ascii")
            if len(raw) > _ID_BYTES:
                raise CorpusError(f"image id {image_id!r} longer than {_ID_BYTES} bytes")
            fh.write(raw.ljust(_ID_BYTES, b"\0"))
            fh.write(values.astype("<f4").tobytes())


def read_features(path) -> dict[str, np.ndarray]:
    """Read an MMFEAT file into ``{image_id: (R, C) float64 array}``."""
    blob = Path(path).read_bytes()
    nl = blob.find(b"\n")
    header = blob[:nl].decode("ascii", errors="replace").split() if nl >= 0 else []
    if len(header) != 4 or header[0] != FEATURE_MAGIC:
        raise CorpusError(f"{path}: not an {FEATURE_MAGIC} file")
    R, C, count = (int(v) for v in header[1:])
    rec = _ID_BYTES + 4 * R * C
    body = blob[nl + 1 :]
    if len(body) != rec * count:
        raise CorpusError(f"{path}: expected {count} records of {rec} bytes, found {len(body)} bytes")
    out: dict[str, np.ndarray] = {}
    for k in range(count):
        chunk = body[k * rec : (k + 1) * rec]
        image_id = chunk[:_ID_BYTES].rstrip(b"\0").decode("ascii")
        vals = np.frombuffer(chunk[_ID_BYTES:], dtype="<f4").astype(np.float64).reshape(R, C)
        if not np.all(np.isfinite(vals)):
            raise CorpusError(f"{path}: non-finite values in feature map {image_id!r}")
        out[image_id] = vals
    return out


# -- datasets and batches -------------------------------------------------


@dataclass
class Dataset:
    examples: list[ParallelExample]
    features: dict[str, np.ndarray]
    src_vocab: Vocabulary
    tgt_vocab: Vocabulary
    meta: list[dict] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.examples)

    @property
    def feature_shape(self) -> tuple[int, int]:
        first = next(iter(self.features.values()))
        return first.shape

    def subset(self, index: Iterable[int]) -> "Dataset":
        index = list(index)
        meta = [self.meta[i] for i in index] if self.meta else []
        return Dataset([self.examples[i] for i in index], self.features, self.src_vocab, self.tgt_vocab, meta)


@dataclass
class Batch:
    src: np.ndarray  # (B, N) ids, PAD-filled
    src_mask: np.ndarray  # (B, N) bool
    tgt_in: np.ndarray  # (B, T) BOS + target
    tgt_out: np.ndarray  # (B, T) target + EOS
    tgt_mask: np.ndarray  # (B, T) bool
    features: np.ndarray  # (B, R, C)
    image_ids: list[str]

    @property
    def size(self) -> int:
        return self.src.shape[0]

    @property
    def n_tokens(self) -> int:
        return int(self.tgt_mask.sum())


def pad_ids(seqs: Sequence[Sequence[int]]) -> tuple[np.ndarray, np.ndarray]:
    width = max(len(s) for s in seqs)
    ids = np.full((len(seqs), width), PAD, dtype=np.int64)
    for i, s in enumerate(seqs):
        ids[i, : len(s)] = s
    return ids, ids != PAD


def make_batch(examples: Sequence[ParallelExample], features: dict[str, np.ndarray]) -> Batch:
    src, src_mask = pad_ids([e.source_ids for e in examples])
    tgt_in, _ = pad_ids([[BOS] + list(e.target_ids) for e in examples])
    tgt_out, tgt_mask = pad_ids([list(e.target_ids) + [EOS] for e in examples])
    try:
        feats = np.stack([features[e.image_id] for e in examples])
    except KeyError as exc:
        raise CorpusError(f"no feature map for image {exc.args[0]!r}") from None
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask, feats, [e.image_id for e in examples])


def batch_iter(dataset: Dataset, batch_size: int, shuffle_seed: int | None = None) -> Iterator[Batch]:
    """One epoch of batches; ``shuffle_seed=None`` keeps corpus order."""
    if batch_size < 1:
        raise CorpusError("batch size must be >= 1")
    order = np.arange(len(dataset.examples))
    if shuffle_seed is not None:
        order = np.random.default_rng(shuffle_seed).permutation(order)
    for start in range(0, len(order), batch_size):
        chunk = [dataset.examples[i] for i in order[start : start + batch_size]]
        yield make_batch(chunk, dataset.features)


# -- files -----------------------------------------------------------------


def read_lines(path) -> list[str]:
    return Path(path).read_text(encoding="utf-8").splitlines()


def build_dataset(
    src_lines: Sequence[str],
    tgt_lines: Sequence[str],
    image_ids: Sequence[str],
    features: dict[str, np.ndarray],
    src_vocab: Vocabulary | None = None,
    tgt_vocab: Vocabulary | None = None,
    src_vocab_size: int = 10000,
    tgt_vocab_size: int = 10000,
    apply_filter: bool = True,
    meta: Sequence[dict] | None = None,
) -> Dataset:
    """Tokenize aligned sentences, build missing vocabularies, encode and filter."""
    if not (len(src_lines) == len(tgt_lines) == len(image_ids)):
        raise CorpusError(
            f"misaligned inputs: {len(src_lines)} source, {len(tgt_lines)} target, {len(image_ids)} image ids"
        )
    src_tok = [tokenize(s) for s in src_lines]
    tgt_tok = [tokenize(s) for s in tgt_lines]
    if src_vocab is None:
        src_vocab = build_vocab(src_tok, src_vocab_size)
    if tgt_vocab is None:
        tgt_vocab = build_vocab(tgt_tok, tgt_vocab_size)
    examples, kept_meta = [], []
    for i, (s, t, img) in enumerate(zip(src_tok, tgt_tok, image_ids)):
        if img not in features:
            raise CorpusError(f"no feature map for image {img!r}")
        ex = ParallelExample(src_vocab.encode(s), tgt_vocab.encode(t), img)
        if apply_filter and not keep_pair(len(s), len(t)):
            continue
        examples.append(ex)
        if meta is not None:
            kept_meta.append(meta[i])
    return Dataset(examples, features, src_vocab, tgt_vocab, kept_meta)


def load_parallel(src_path, tgt_path, ids_path, feat_path, **kwargs) -> Dataset:
    return build_dataset(
        read_lines(src_path), read_lines(tgt_path), read_lines(ids_path), read_features(feat_path), **kwargs
    )

