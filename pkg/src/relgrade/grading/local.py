"""Graders that run in-process: cosine threshold and the trained head."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from relgrade.corpus import Corpus, PairRecord
from relgrade.errors import UsageError
from relgrade.grading.verdicts import GraderVerdict
from relgrade.training.head import ClassifierHead, features_for_pairs


def grade_with_threshold(pairs: Sequence[PairRecord], t: float) -> list[GraderVerdict]:
    """Relevant iff ``cosine >= t`` (inclusive boundary)."""
    return [
        GraderVerdict.for_pair(p, bool(p.cosine >= t), f"cosine={p.cosine:.6f} t={t}")
        for p in pairs
    ]


def grade_with_head(pairs: Sequence[PairRecord], head: ClassifierHead, corpus: Corpus) -> list[GraderVerdict]:
    """Argmax of the head's softmaxed logits; exact ties go to not-relevant."""
    if not pairs:
        return []
    features = features_for_pairs(pairs, corpus)
    if features.shape[1] != head.n_features:
        raise UsageError(
            f"head expects {head.n_features} features, pairs give {features.shape[1]}"
        )
    logits = head.logits(features)
    relevant = head.decide(logits)
    return [
        GraderVerdict.for_pair(p, bool(r), f"logits=({z[0]:.6g},{z[1]:.6g})")
        for p, r, z in zip(pairs, relevant, logits)
    ]
