"""Graph InfoClust node embeddings: model, trainer and evaluation harness."""

from .graph import AttributedGraph, extract_lcc, load_graph, normalize_adjacency
from .model import ModelParams, encode
from .training import TrainConfig, select_model, train

__all__ = [
    "AttributedGraph",
    "ModelParams",
    "TrainConfig",
    "encode",
    "extract_lcc",
    "load_graph",
    "normalize_adjacency",
    "select_model",
    "train",
]
__version__ = "0.1.0"
