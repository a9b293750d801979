"""Structural embeddings: scorers, training, thresholds."""
from .model import (
    EmbeddingTable,
    TrainConfig,
    TrainResult,
    batch_loss,
    load_table,
    save_table,
    score_triple,
    train,
)
from .thresholds import ThresholdTable, best_threshold, classify_kge, classify_many, tune_thresholds

__all__ = [
    "EmbeddingTable",
    "TrainConfig",
    "TrainResult",
    "ThresholdTable",
    "batch_loss",
    "best_threshold",
    "classify_kge",
    "classify_many",
    "load_table",
    "save_table",
    "score_triple",
    "train",
    "tune_thresholds",
]
