"""Tabular-guided contrastive pretraining for image encoders.

Tabular attributes recorded alongside each image decide which samples in a
batch count as positives for a multi-positive InfoNCE loss. The tabular data
never enters the encoder. Trained embeddings support zero-shot k-NN
prediction against a labelled reference set, linear probing and fine-tuning.
"""
__version__ = "0.1.0"

from .encoder import EncoderConfig, EncoderState, embed, forward
from .loss import LossConfig, tgv_loss
from .pairing import PairAssignment, assign_pairs
from .tabular import AttributeSchema, TabularBatch, batch_similarity, encode_batch, fit_schema
from .trainer import TrainConfig, TrainReport, train
from .zeroshot import ReferenceSet, ZeroShotConfig, build_reference, predict_mean

__all__ = [
    "AttributeSchema", "EncoderConfig", "EncoderState", "LossConfig", "PairAssignment",
    "ReferenceSet", "TabularBatch", "TrainConfig", "TrainReport", "ZeroShotConfig",
    "assign_pairs", "batch_similarity", "build_reference", "embed", "encode_batch",
    "fit_schema", "forward", "predict_mean", "tgv_loss", "train",
]
