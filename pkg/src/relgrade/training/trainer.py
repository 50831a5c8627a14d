"""Minibatch training loop for :class:`ClassifierHead`."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from relgrade.corpus import Corpus, PairRecord
from relgrade.errors import DomainError, UsageError
from relgrade.evaluation import ConfusionMatrix, MetricsRow, fmt, metrics
from relgrade.training.data import RESAMPLING, class_counts, rebalance
from relgrade.training.head import ClassifierHead, features_for_pairs
from relgrade.training.losses import contrastive_batch, cross_entropy_batch
from relgrade.training.optim import AdamWConfig, AdamWState, adamw_step, cosine_lr

LOSSES = ("cross_entropy", "contrastive")


@dataclass(frozen=True)
class TrainingConfig:
    loss: str = "cross_entropy"
    margin: float = 1.0
    peak_lr: float = 1e-3
    final_lr_fraction: float = 0.1
    epochs: int = 20
    batch_size: int = 256
    resampling: str = "none"
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01

    def __post_init__(self) -> None:
        if self.loss not in LOSSES:
            raise UsageError(f"loss must be one of {LOSSES}")
        if self.resampling not in RESAMPLING:
            raise UsageError(f"resampling must be one of {RESAMPLING}")
        if self.margin <= 0:
            raise UsageError("margin must be positive")
        if self.peak_lr <= 0:
            raise UsageError("peak_lr must be positive")
        if not 0.0 < self.final_lr_fraction <= 1.0:
            raise UsageError("final_lr_fraction must lie in (0, 1]")
        if self.epochs < 0:
            raise UsageError("epochs must be non-negative")
        if self.batch_size < 1:
            raise UsageError("batch_size must be positive")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise UsageError("betas must lie in [0, 1)")
        if self.eps <= 0:
            raise UsageError("eps must be positive")
        if self.weight_decay < 0:
            raise UsageError("weight_decay must be non-negative")

    @property
    def adamw(self) -> AdamWConfig:
        return AdamWConfig(self.beta1, self.beta2, self.eps, self.weight_decay)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class EpochRow:
    epoch: int
    train_loss: float
    lr: float
    test: MetricsRow | None


@dataclass
class TrainReport:
    head: ClassifierHead
    initial_head: ClassifierHead
    epochs: list[EpochRow] = field(default_factory=list)
    n_positive: int = 0
    n_negative: int = 0
    config: TrainingConfig = field(default_factory=TrainingConfig)

    @property
    def seed(self) -> int:
        return self.config.seed

    @property
    def losses(self) -> list[float]:
        return [row.train_loss for row in self.epochs]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["epoch", "train_loss", "lr", "test_accuracy", "test_precision",
                         "test_recall", "test_f1"])
        for row in self.epochs:
            test = row.test.values() if row.test else (None,) * 4
            writer.writerow([row.epoch, repr(row.train_loss), repr(row.lr),
                             *(fmt(v, "") for v in test)])
        return buf.getvalue()

    def write_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _labels(pairs: Sequence[PairRecord]) -> np.ndarray:
    if any(p.label is None for p in pairs):
        raise UsageError("training and test pairs must all be labeled")
    return np.array([p.label for p in pairs], dtype=np.int64)


def _batch_loss(config: TrainingConfig, logits: np.ndarray, y: np.ndarray):
    if config.loss == "cross_entropy":
        return cross_entropy_batch(logits, y)
    return contrastive_batch(logits, y, config.margin)


def _test_metrics(head: ClassifierHead, X: np.ndarray, y: np.ndarray) -> MetricsRow | None:
    if len(y) == 0:
        return None
    pred = head.decide(head.logits(X))
    truth = y.astype(bool)
    cm = ConfusionMatrix(
        tp=int(np.sum(pred & truth)), fp=int(np.sum(pred & ~truth)),
        fn=int(np.sum(~pred & truth)), tn=int(np.sum(~pred & ~truth)),
    )
    return metrics(cm, "head")


def train(
    train_pairs: Sequence[PairRecord],
    test_pairs: Sequence[PairRecord],
    corpus: Corpus,
    config: TrainingConfig = TrainingConfig(),
) -> TrainReport:
    """Fit a fresh head on ``train_pairs`` and score it on ``test_pairs`` after every epoch.

    Args:
        train_pairs: Labeled training pairs. Resampled per ``config.resampling``.
        test_pairs: Labeled held-out pairs; may be empty.
        corpus: Source of query and document embeddings.
        config: Loss, schedule and optimizer settings.

    Returns:
        A report with the final head, one row per epoch and the class counts
        actually trained on.

    Raises:
        DomainError: If the training set is empty or holds a single class.
    """
    if not train_pairs:
        raise DomainError("training set is empty")
    resampled = rebalance(train_pairs, config.resampling, config.seed)
    n_pos, n_neg = class_counts(resampled)
    X = features_for_pairs(resampled, corpus)
    y = _labels(resampled)
    if test_pairs:
        X_test = features_for_pairs(test_pairs, corpus)
        if X_test.shape[1] != X.shape[1]:
            raise UsageError("train and test features differ in width")
        y_test = _labels(test_pairs)
    else:
        X_test, y_test = np.empty((0, X.shape[1])), np.empty(0, dtype=np.int64)

    head = ClassifierHead.initialize(X.shape[1], config.seed)
    report = TrainReport(head=head, initial_head=head.copy(), n_positive=n_pos,
                         n_negative=n_neg, config=config)
    n = len(y)
    per_epoch = math.ceil(n / config.batch_size)
    total = config.epochs * per_epoch
    state = AdamWState.zeros_like(head)
    adamw = config.adamw
    step = 0
    for epoch in range(1, config.epochs + 1):
        order = np.random.default_rng(config.seed + epoch).permutation(n)
        batch_losses = []
        lr = config.peak_lr
        for start in range(0, n, config.batch_size):
            idx = order[start:start + config.batch_size]
            xb = X[idx]
            loss, grad_z = _batch_loss(config, head.logits(xb), y[idx])
            lr = cosine_lr(step, total, config.peak_lr, config.final_lr_fraction)
            head, state = adamw_step(head, grad_z.T @ xb, grad_z.sum(axis=0), state, lr, adamw)
            batch_losses.append(loss)
            step += 1
        report.epochs.append(
            EpochRow(epoch, float(np.mean(batch_losses)), lr, _test_metrics(head, X_test, y_test))
        )
    report.head = head
    return report
