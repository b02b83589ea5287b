"""Multimodal attentive encoder-decoder translation at desk scale."""

from .attention import AttentionWiring
from .model import ModelConfig, MultimodalNMT
from .search import BeamConfig, beam_search, best_source_select
from .trainer import TrainConfig, train

__all__ = [
    "AttentionWiring",
    "BeamConfig",
    "ModelConfig",
    "MultimodalNMT",
    "TrainConfig",
    "beam_search",
    "best_source_select",
    "train",
]

__version__ = "0.1.0"
