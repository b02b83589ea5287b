"""Flat ``section.key = value`` experiment configuration."""

from __future__ import annotations

import os
import typing
from dataclasses import dataclass, field, fields
from pathlib import Path

from .trainer import TrainConfig

SEED_ENV = "MMATTN_SEED"


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    train_src: str = ""
    train_tgt: str = ""
    train_ids: str = ""
    features: str = ""
    valid_src: str = ""
    valid_tgt: str = ""
    valid_ids: str = ""
    valid_features: str = ""
    src_vocab_size: int = 10000
    tgt_vocab_size: int = 10000
    synthetic: bool = False
    synthetic_pairs: int = 500
    synthetic_attributes: int = 4
    synthetic_valid_sources: int = 40


@dataclass
class ModelSection:
    emb: int = 16
    enc_hidden: int = 8
    dec_hidden: int = 8
    att_hidden: int = 0
    visual_dim: int = 0
    encoder_dependent: bool = True
    decoder_dependent: bool = False
    fusion: str = "concat"
    use_image: bool = True


@dataclass
class SearchSection:
    beam_size: int = 12
    max_len: int = 50
    length_norm: bool = True


@dataclass
class ExperimentConfig:
    seed: int = 1234
    output_dir: str = "run"
    data: DataSection = field(default_factory=DataSection)
    model: ModelSection = field(default_factory=ModelSection)
    train: TrainConfig = field(default_factory=TrainConfig)
    search: SearchSection = field(default_factory=SearchSection)

    SECTIONS = ("data", "model", "train", "search")

    def __post_init__(self):
        self.train.seed = self.seed

    def items(self):
        for f in fields(self):
            if f.name in self.SECTIONS:
                continue
            yield f.name, getattr(self, f.name)
        for sec in self.SECTIONS:
            obj = getattr(self, sec)
            for f in fields(obj):
                if sec == "train" and f.name == "seed":
                    continue
                yield f"{sec}.{f.name}", getattr(obj, f.name)

    def dumps(self) -> str:
        return "".join(f"{k} = {_format(v)}\n" for k, v in self.items())

    def dump(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8")


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v) if isinstance(v, float) else str(v)


def _parse(raw: str, kind, key: str):
    if kind is bool:
        low = raw.lower()
        if low in ("true", "yes", "on", "1"):
            return True
        if low in ("false", "no", "off", "0"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind.__name__}, got {raw!r}") from None


def _field_types(obj) -> dict[str, type]:
    hints = typing.get_type_hints(type(obj))
    return {f.name: hints[f.name] for f in fields(obj)}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    cfg = ExperimentConfig()
    top = _field_types(cfg)
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = (s.strip() for s in line.split("=", 1))
        if key in seen:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}")
        seen.add(key)
        if "." in key:
            sec, name = key.split(".", 1)
            if sec not in ExperimentConfig.SECTIONS:
                raise ConfigError(f"{source}:{lineno}: unknown section {sec!r}")
            obj = getattr(cfg, sec)
            types = _field_types(obj)
            if name not in types or (sec == "train" and name == "seed"):
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            setattr(obj, name, _parse(raw, types[name], key))
        else:
            if key not in top or key in ExperimentConfig.SECTIONS:
                raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
            setattr(cfg, key, _parse(raw, top[key], key))
    env = os.environ.get(SEED_ENV)
    if env:
        cfg.seed = _parse(env, int, SEED_ENV)
    cfg.train.seed = cfg.seed
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text, str(path))
