"""Training of the linear relevance head."""

from relgrade.training.data import RESAMPLING, class_counts, rebalance, round_half_up, stratified_split
from relgrade.training.head import ClassifierHead, features_for_pairs
from relgrade.training.losses import (
    contrastive_batch,
    contrastive_loss,
    cross_entropy_batch,
    cross_entropy_loss,
    softmax,
)
from relgrade.training.optim import AdamWConfig, AdamWState, adamw_step, cosine_lr
from relgrade.training.trainer import LOSSES, EpochRow, TrainingConfig, TrainReport, train

__all__ = [
    "AdamWConfig", "AdamWState", "ClassifierHead", "EpochRow", "LOSSES", "RESAMPLING",
    "TrainReport", "TrainingConfig", "adamw_step", "class_counts", "contrastive_batch",
    "contrastive_loss", "cosine_lr", "cross_entropy_batch", "cross_entropy_loss",
    "features_for_pairs", "rebalance", "round_half_up", "softmax", "stratified_split", "train",
]
