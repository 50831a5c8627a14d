"""Dense vector primitives.

Embeddings are plain 1-D numpy arrays. Storage dtype is left to the caller,
but every reduction here is carried out in float64.
"""

from __future__ import annotations

from typing import Sequence, Union

import numpy as np

from relgrade.errors import DomainError, UsageError

DEFAULT_DIM = 384

ArrayLike = Union[np.ndarray, Sequence[float]]


def as_vector(values: ArrayLike, dim: int | None = None) -> np.ndarray:
    """Validate ``values`` as an embedding and return it as a float64 array.

    Raises:
        UsageError: if the input is not 1-D, is empty, or has the wrong ``dim``.
        DomainError: if any entry is NaN or infinite.
    """
    arr = np.asarray(values, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise UsageError(f"embedding must be a non-empty 1-D sequence, got shape {arr.shape}")
    if dim is not None and arr.size != dim:
        raise UsageError(f"embedding has dim {arr.size}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise DomainError("embedding contains NaN or infinite values")
    return arr


def _pair(a: ArrayLike, b: ArrayLike) -> tuple[np.ndarray, np.ndarray]:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise UsageError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def norm(a: ArrayLike) -> float:
    a = np.asarray(a, dtype=np.float64)
    return float(np.sqrt(np.dot(a, a)))


def cosine_similarity(a: ArrayLike, b: ArrayLike) -> float:
    """Cosine of the angle between ``a`` and ``b``, clamped to [-1, 1].

    Raises:
        UsageError: on dimension mismatch.
        DomainError: if either vector has zero norm.
    """
    a, b = _pair(a, b)
    na = norm(a)
    nb = norm(b)
    if na == 0.0 or nb == 0.0:
        raise DomainError("cosine similarity is undefined for a zero vector")
    value = float(np.dot(a, b)) / (na * nb)
    return min(1.0, max(-1.0, value))


def euclidean_distance(a: ArrayLike, b: ArrayLike) -> float:
    a, b = _pair(a, b)
    diff = a - b
    return float(np.sqrt(np.dot(diff, diff)))


def normalize(a: ArrayLike) -> np.ndarray:
    """Return ``a`` scaled to unit L2 norm (as float64)."""
    a = np.asarray(a, dtype=np.float64)
    n = norm(a)
    if n == 0.0:
        raise DomainError("cannot normalize a zero vector")
    return a / n


def normalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Row-wise :func:`normalize` for a 2-D array."""
    matrix = np.asarray(matrix, dtype=np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", matrix, matrix))
    if np.any(norms == 0.0):
        raise DomainError("cannot normalize a zero vector")
    return matrix / norms[:, None]


def pair_features(q: ArrayLike, d: ArrayLike) -> np.ndarray:
    """Interaction features ``[q ; d ; q*d ; |q-d|]`` of length ``4 * dim``."""
    q, d = _pair(q, d)
    return np.concatenate([q, d, q * d, np.abs(q - d)])


def pair_features_batch(queries: np.ndarray, docs: np.ndarray) -> np.ndarray:
    """Row-wise :func:`pair_features`; inputs are ``(n, dim)`` arrays."""
    queries = np.asarray(queries, dtype=np.float64)
    docs = np.asarray(docs, dtype=np.float64)
    if queries.shape != docs.shape or queries.ndim != 2:
        raise UsageError(f"dimension mismatch: {queries.shape} vs {docs.shape}")
    return np.concatenate([queries, docs, queries * docs, np.abs(queries - docs)], axis=1)
