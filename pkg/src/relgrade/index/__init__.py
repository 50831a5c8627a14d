"""Top-k cosine retrieval: exact brute force and HNSW."""

from relgrade.index.brute import BruteForceIndex, bf_insert, bf_search
from relgrade.index.hnsw import HnswIndex, HnswParams, hnsw_insert, hnsw_search
from relgrade.index.results import SearchResult, rank_hits, recall_at_k

__all__ = [
    "BruteForceIndex",
    "HnswIndex",
    "HnswParams",
    "SearchResult",
    "bf_insert",
    "bf_search",
    "hnsw_insert",
    "hnsw_search",
    "rank_hits",
    "recall_at_k",
]
