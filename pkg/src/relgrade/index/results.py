from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from relgrade.errors import UsageError


@dataclass(frozen=True)
class SearchResult:
    """Ranked hits as ``(doc_id, cosine)`` pairs, best first."""

    hits: list[tuple[str, float]] = field(default_factory=list)

    @property
    def ids(self) -> list[str]:
        return [doc_id for doc_id, _ in self.hits]

    @property
    def scores(self) -> list[float]:
        return [score for _, score in self.hits]

    def __len__(self) -> int:
        return len(self.hits)


def rank_hits(doc_ids: list[str], scores: np.ndarray, k: int) -> SearchResult:
    """Top ``k`` of ``scores`` ordered by descending score, then ascending doc_id.

    Every element tied with the k-th best score is considered before
    truncation, so the tie rule holds at the cut-off as well.
    """
    n = len(doc_ids)
    scores = np.clip(np.asarray(scores, dtype=np.float64), -1.0, 1.0)
    if n > k:
        kth = np.partition(scores, n - k)[n - k]
        pool: Iterable[int] = np.flatnonzero(scores >= kth)
    else:
        pool = range(n)
    ordered = sorted(pool, key=lambda i: (-scores[i], doc_ids[i]))[:k]
    return SearchResult([(doc_ids[i], float(scores[i])) for i in ordered])


def recall_at_k(approx: SearchResult, exact: SearchResult, k: int) -> float:
    """Fraction of the exact top-k ids that also appear in the approximate top-k."""
    if k < 1:
        raise UsageError("k must be positive")
    if len(exact) < k:
        raise UsageError(f"exact result has {len(exact)} hits, need at least {k}")
    truth = set(exact.ids[:k])
    return len(truth.intersection(approx.ids[:k])) / k
