from __future__ import annotations

import numpy as np

from relgrade.errors import DomainError, UsageError
from relgrade.index.results import SearchResult, rank_hits
from relgrade.vectormath import as_vector, normalize


class BruteForceIndex:
    """Exact top-k cosine search by scoring every stored vector.

    Doubles as the correctness oracle for :class:`~relgrade.index.hnsw.HnswIndex`.
    """

    def __init__(self, dim: int | None = None) -> None:
        self.dim = dim
        self._ids: list[str] = []
        self._positions: dict[str, int] = {}
        self._raw: list[np.ndarray] = []
        self._unit = np.empty((0, dim or 0), dtype=np.float64)
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._positions

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def vector(self, doc_id: str) -> np.ndarray:
        return self._raw[self._positions[doc_id]]

    def insert(self, doc_id: str, vector) -> None:
        if doc_id in self._positions:
            raise UsageError(f"duplicate doc_id {doc_id!r}")
        v = as_vector(vector, self.dim)
        unit = normalize(v)
        if self.dim is None:
            self.dim = v.size
            self._unit = np.empty((0, self.dim), dtype=np.float64)
        if self._size == self._unit.shape[0]:
            grown = np.empty((max(16, 2 * self._size), self.dim), dtype=np.float64)
            grown[: self._size] = self._unit[: self._size]
            self._unit = grown
        self._unit[self._size] = unit
        self._positions[doc_id] = self._size
        self._ids.append(doc_id)
        self._raw.append(v)
        self._size += 1

    def search(self, query, k: int) -> SearchResult:
        if k < 1:
            raise UsageError("k must be positive")
        if self._size == 0:
            raise DomainError("search on an empty index")
        q = normalize(as_vector(query, self.dim))
        scores = self._unit[: self._size] @ q
        return rank_hits(self._ids, scores, k)


def bf_insert(index: BruteForceIndex, doc_id: str, vector) -> BruteForceIndex:
    index.insert(doc_id, vector)
    return index


def bf_search(index: BruteForceIndex, query, k: int) -> SearchResult:
    return index.search(query, k)
