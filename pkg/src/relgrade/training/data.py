"""Stratified train/test splitting and class rebalancing for labeled pairs."""

from __future__ import annotations

import math
from dataclasses import replace
from typing import Sequence

import numpy as np

from relgrade.corpus import PairRecord
from relgrade.errors import DomainError, UsageError

RESAMPLING = ("none", "oversample", "undersample")


def round_half_up(x: float) -> int:
    # guard against 0.2 * 900 = 180.00000000000003 style noise
    return int(math.floor(round(x, 9) + 0.5))


def _by_class(pairs: Sequence[PairRecord]) -> tuple[list[PairRecord], list[PairRecord]]:
    pos, neg = [], []
    for p in pairs:
        if p.label is None:
            raise UsageError(f"pair {p.key} has no label")
        (pos if p.label else neg).append(p)
    if not pos or not neg:
        raise DomainError("both classes must be present")
    return pos, neg


def _canonical(pairs: Sequence[PairRecord]) -> list[PairRecord]:
    return sorted(pairs, key=lambda p: (p.query_id, p.doc_id, p.retrieval_date))


def stratified_split(
    pairs: Sequence[PairRecord], test_fraction: float, seed: int
) -> tuple[list[PairRecord], list[PairRecord]]:
    """Split each class separately so both sides keep the base rate.

    Each class contributes ``round_half_up(n_class * test_fraction)`` pairs to
    the test side. Input order does not matter: pairs are put in canonical key
    order before the seeded draw. Returned pairs carry their ``split`` tag and
    come back in canonical order.
    """
    if not 0.0 < test_fraction < 1.0:
        raise UsageError("test_fraction must lie strictly between 0 and 1")
    pos, neg = _by_class(pairs)
    rng = np.random.default_rng(seed)
    test_keys = set()
    for group in (_canonical(pos), _canonical(neg)):
        n_test = round_half_up(len(group) * test_fraction)
        for i in rng.permutation(len(group))[:n_test]:
            test_keys.add(group[i].key)
    train, test = [], []
    for p in _canonical(pairs):
        if p.key in test_keys:
            test.append(replace(p, split="test"))
        else:
            train.append(replace(p, split="train"))
    return train, test


def rebalance(train: Sequence[PairRecord], strategy: str, seed: int) -> list[PairRecord]:
    """Resample ``train`` toward equal class counts, then shuffle.

    ``oversample`` keeps every original and tops up the minority class with
    draws with replacement. ``undersample`` draws the majority class down to
    the minority count without replacement. ``none`` only shuffles.
    """
    if strategy not in RESAMPLING:
        raise UsageError(f"unknown resampling strategy {strategy!r}; choose from {RESAMPLING}")
    pos, neg = _by_class(train)
    rng = np.random.default_rng(seed)
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    if strategy == "oversample":
        extra = rng.integers(0, len(minority), size=len(majority) - len(minority))
        out = list(train) + [minority[i] for i in extra]
    elif strategy == "undersample":
        keep = np.sort(rng.choice(len(majority), size=len(minority), replace=False))
        out = minority + [majority[i] for i in keep]
    else:
        out = list(train)
    return [out[i] for i in rng.permutation(len(out))]


def class_counts(pairs: Sequence[PairRecord]) -> tuple[int, int]:
    """``(positives, negatives)`` among labeled pairs."""
    pos = sum(1 for p in pairs if p.label)
    return pos, sum(1 for p in pairs if p.label is False)
