"""Hierarchical navigable small world index over cosine similarity.

Vectors are normalized on insert so that similarity is a dot product.
Neighbor selection keeps the closest candidates by default; the diversity
heuristic is available through ``HnswParams(heuristic=True)``.

The on-disk format is described in ``docs/index_format.md``.
"""

from __future__ import annotations

import io
import math
import struct
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from relgrade.errors import DomainError, FormatError, UsageError
from relgrade.index import _kernels
from relgrade.index.results import SearchResult, rank_hits
from relgrade.vectormath import as_vector, normalize

MAGIC = b"RGHNSW\x00\x00"
FORMAT_VERSION = 1
_HEADER = struct.Struct("<8sIIIIIdqQqiI")
_FLAG_HEURISTIC = 1
_RNG_STATE = struct.Struct("<16s16siI")
# float32 traversal scores are within ~1e-6 of the float64 ones
_RESCORE_SLACK = 1e-5


@dataclass(frozen=True)
class HnswParams:
    m: int = 16
    ef_construction: int = 200
    ef_search: int = 100
    level_scale: float | None = None
    heuristic: bool = False

    def __post_init__(self) -> None:
        if self.m < 2:
            raise UsageError("M must be at least 2")
        if self.ef_construction < 1 or self.ef_search < 1:
            raise UsageError("ef values must be positive")
        if self.level_scale is None:
            object.__setattr__(self, "level_scale", 1.0 / math.log(self.m))


class HnswIndex:
    """Append-only HNSW graph.

    Args:
        dim: vector dimension; inferred from the first insert when omitted.
        params: graph parameters (M, ef_construction, default ef_search).
        seed: seeds the generator that draws node levels.

    Builds are single-writer. Concurrent searches on a built index are fine;
    an insert that overlaps a search raises :class:`UsageError`.
    """

    def __init__(self, dim: int | None = None, params: HnswParams | None = None, seed: int = 0) -> None:
        self.dim = dim
        self.params = params or HnswParams()
        self.seed = int(seed)
        self._rng = np.random.Generator(np.random.PCG64(self.seed))
        self._ids: list[str] = []
        self._positions: dict[str, int] = {}
        self._n = 0
        self._n_up_rows = 0
        self.entry_point = -1
        self.max_level = 0
        self._state_lock = threading.Lock()
        self._readers = 0
        self._writing = False
        self._allocate(16 if dim else 0, 16)

    # storage -------------------------------------------------------------

    def _allocate(self, cap: int, up_cap: int) -> None:
        m = self.params.m
        self._vecs = np.zeros((cap, self.dim or 0), dtype=np.float64)
        self._vecs32 = np.zeros((cap, self.dim or 0), dtype=np.float32)
        self._levels = np.zeros(cap, dtype=np.int32)
        self._l0_links = np.zeros((cap, 2 * m), dtype=np.int32)
        self._l0_count = np.zeros(cap, dtype=np.int32)
        self._up_offset = np.full(cap, -1, dtype=np.int64)
        self._up_links = np.zeros((up_cap, m), dtype=np.int32)
        self._up_count = np.zeros(up_cap, dtype=np.int32)

    @staticmethod
    def _grow(arr: np.ndarray, size: int, fill=0) -> np.ndarray:
        out = np.full((size,) + arr.shape[1:], fill, dtype=arr.dtype)
        out[: arr.shape[0]] = arr
        return out

    def _reserve(self, extra_rows: int) -> None:
        cap = self._vecs.shape[0]
        if self._n >= cap:
            new = max(16, 2 * cap)
            self._vecs = self._grow(self._vecs, new)
            self._vecs32 = self._grow(self._vecs32, new)
            self._levels = self._grow(self._levels, new)
            self._l0_links = self._grow(self._l0_links, new)
            self._l0_count = self._grow(self._l0_count, new)
            self._up_offset = self._grow(self._up_offset, new, -1)
        need = self._n_up_rows + extra_rows
        if need > self._up_links.shape[0]:
            new = max(need, 2 * self._up_links.shape[0])
            self._up_links = self._grow(self._up_links, new)
            self._up_count = self._grow(self._up_count, new)

    def _graph_arrays(self):
        return (self._vecs32, self._l0_links, self._l0_count,
                self._up_offset, self._up_links, self._up_count)

    @contextmanager
    def _guard(self, writing: bool):
        with self._state_lock:
            if self._writing or (writing and self._readers):
                raise UsageError("concurrent insert and search on one index is not supported")
            if writing:
                self._writing = True
            else:
                self._readers += 1
        try:
            yield
        finally:
            with self._state_lock:
                if writing:
                    self._writing = False
                else:
                    self._readers -= 1

    # public API ----------------------------------------------------------

    def __len__(self) -> int:
        return self._n

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._positions

    @property
    def ids(self) -> list[str]:
        return list(self._ids)

    def level_of(self, doc_id: str) -> int:
        return int(self._levels[self._positions[doc_id]])

    def draw_level(self) -> int:
        u = 1.0 - self._rng.random()  # uniform on (0, 1]
        return int(math.floor(-math.log(u) * self.params.level_scale))

    def insert(self, doc_id: str, vector) -> None:
        if doc_id in self._positions:
            raise UsageError(f"duplicate doc_id {doc_id!r}")
        v = as_vector(vector, self.dim)
        unit = normalize(v)
        with self._guard(writing=True):
            if self.dim is None:
                self.dim = v.size
                self._allocate(16, 16)
            level = self.draw_level()
            self._reserve(level)
            node = self._n
            self._vecs[node] = unit
            self._vecs32[node] = unit
            self._levels[node] = level
            if level > 0:
                self._up_offset[node] = self._n_up_rows
                self._n_up_rows += level
            self._ids.append(doc_id)
            self._positions[doc_id] = node
            self._n += 1
            if node == 0:
                self.entry_point = 0
                self.max_level = level
                return
            _kernels.insert(
                node, self.entry_point, self.max_level, self.params.m,
                self.params.ef_construction, self.params.heuristic, self._vecs32, self._levels,
                self._l0_links, self._l0_count, self._up_offset,
                self._up_links, self._up_count,
            )
            if level > self.max_level:
                self.entry_point = node
                self.max_level = level

    def search(self, query, k: int, ef_search: int | None = None) -> SearchResult:
        ef = self.params.ef_search if ef_search is None else ef_search
        if k < 1:
            raise UsageError("k must be positive")
        if ef < k:
            raise UsageError(f"ef_search ({ef}) must be >= k ({k})")
        if self._n == 0:
            raise DomainError("search on an empty index")
        q = normalize(as_vector(query, self.dim))
        with self._guard(writing=False):
            ids, approx = _kernels.search(
                q, self.entry_point, self.max_level, ef, self._n, *self._graph_arrays()
            )
        if len(ids) > k:
            # rescore in float64 only what can still reach the top k
            cut = np.partition(approx, len(ids) - k)[len(ids) - k] - _RESCORE_SLACK
            ids = ids[approx >= cut]
        scores = self._vecs[ids] @ q
        return rank_hits([self._ids[i] for i in ids], scores, k)

    def neighbors(self, doc_id: str, layer: int) -> list[str]:
        node = self._positions[doc_id]
        return [self._ids[j] for j in self._neighbor_nodes(node, layer)]

    def _neighbor_nodes(self, node: int, layer: int) -> np.ndarray:
        if layer > self._levels[node]:
            raise UsageError(f"node {node} is not present at layer {layer}")
        if layer == 0:
            return self._l0_links[node, : self._l0_count[node]]
        row = self._up_offset[node] + layer - 1
        return self._up_links[row, : self._up_count[row]]

    def layer_nodes(self, layer: int) -> list[int]:
        return [int(i) for i in np.flatnonzero(self._levels[: self._n] >= layer)]

    def validate(self) -> list[str]:
        """Check graph invariants; returns human-readable violations (empty if sound)."""
        problems: list[str] = []
        n = self._n
        if n == 0:
            return problems
        if not 0 <= self.entry_point < n:
            problems.append(f"entry point {self.entry_point} out of range")
        elif self._levels[self.entry_point] != self.max_level:
            problems.append("entry point is not on the top layer")
        if int(self._levels[:n].max()) != self.max_level:
            problems.append("max_level disagrees with node levels")
        m = self.params.m
        for node in range(n):
            for layer in range(int(self._levels[node]) + 1):
                nbrs = self._neighbor_nodes(node, layer)
                cap = 2 * m if layer == 0 else m
                if len(nbrs) > cap:
                    problems.append(f"node {node} layer {layer}: degree {len(nbrs)} > {cap}")
                if len(set(nbrs.tolist())) != len(nbrs):
                    problems.append(f"node {node} layer {layer}: duplicate neighbors")
                for j in nbrs:
                    if not 0 <= j < n:
                        problems.append(f"node {node} layer {layer}: dangling edge to {j}")
                    elif j == node:
                        problems.append(f"node {node} layer {layer}: self loop")
                    elif self._levels[j] < layer:
                        problems.append(f"node {node} layer {layer}: neighbor {j} absent from layer")
        return problems

    # serialization -------------------------------------------------------

    def to_bytes(self) -> bytes:
        buf = io.BytesIO()
        p = self.params
        buf.write(_HEADER.pack(
            MAGIC, FORMAT_VERSION, self.dim or 0, p.m, p.ef_construction, p.ef_search,
            p.level_scale, self.seed, self._n, self.entry_point, self.max_level,
            _FLAG_HEURISTIC if p.heuristic else 0,
        ))
        state = self._rng.bit_generator.state
        buf.write(_RNG_STATE.pack(
            state["state"]["state"].to_bytes(16, "little"),
            state["state"]["inc"].to_bytes(16, "little"),
            state["has_uint32"], state["uinteger"],
        ))
        for node in range(self._n):
            raw_id = self._ids[node].encode("utf-8")
            buf.write(struct.pack("<I", len(raw_id)))
            buf.write(raw_id)
            buf.write(struct.pack("<i", int(self._levels[node])))
            buf.write(self._vecs[node].astype("<f8").tobytes())
        for layer in range(self.max_level + 1 if self._n else 0):
            for node in self.layer_nodes(layer):
                nbrs = self._neighbor_nodes(node, layer)
                buf.write(struct.pack("<I", len(nbrs)))
                buf.write(nbrs.astype("<u4").tobytes())
        return buf.getvalue()

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> "HnswIndex":
        view = memoryview(data)
        try:
            (magic, version, dim, m, efc, efs, level_scale, seed, n,
             entry, max_level, flags) = _HEADER.unpack_from(view, 0)
        except struct.error as exc:
            raise FormatError(f"truncated index header: {exc}") from None
        if magic != MAGIC:
            raise FormatError("not an HNSW index file (bad magic)")
        if version != FORMAT_VERSION:
            raise FormatError(f"unsupported index format version {version}")
        pos = _HEADER.size
        try:
            st, inc, has32, uint = _RNG_STATE.unpack_from(view, pos)
            pos += _RNG_STATE.size
            index = cls(dim or None, HnswParams(m, efc, efs, level_scale, bool(flags & _FLAG_HEURISTIC)), seed)
            index._rng.bit_generator.state = {
                "bit_generator": "PCG64",
                "state": {"state": int.from_bytes(st, "little"),
                          "inc": int.from_bytes(inc, "little")},
                "has_uint32": has32, "uinteger": uint,
            }
            index._allocate(max(n, 16), 16)
            for node in range(n):
                (length,) = struct.unpack_from("<I", view, pos)
                pos += 4
                index._ids.append(bytes(view[pos:pos + length]).decode("utf-8"))
                pos += length
                (level,) = struct.unpack_from("<i", view, pos)
                pos += 4
                vec = np.frombuffer(view, dtype="<f8", count=dim, offset=pos)
                pos += 8 * dim
                index._vecs[node] = vec
                index._vecs32[node] = vec
                index._levels[node] = level
                if level > 0:
                    index._reserve(level)
                    index._up_offset[node] = index._n_up_rows
                    index._n_up_rows += level
                index._positions[index._ids[-1]] = node
            index._n = n
            index.entry_point = entry
            index.max_level = max_level
            for layer in range(max_level + 1 if n else 0):
                for node in index.layer_nodes(layer):
                    (count,) = struct.unpack_from("<I", view, pos)
                    pos += 4
                    nbrs = np.frombuffer(view, dtype="<u4", count=count, offset=pos)
                    pos += 4 * count
                    if layer == 0:
                        index._l0_links[node, :count] = nbrs
                        index._l0_count[node] = count
                    else:
                        row = index._up_offset[node] + layer - 1
                        index._up_links[row, :count] = nbrs
                        index._up_count[row] = count
        except (struct.error, ValueError) as exc:
            raise FormatError(f"corrupt index body: {exc}") from None
        if pos != len(data):
            raise FormatError(f"{len(data) - pos} trailing bytes after index body")
        return index

    @classmethod
    def load(cls, path) -> "HnswIndex":
        return cls.from_bytes(Path(path).read_bytes())


def hnsw_insert(index: HnswIndex, doc_id: str, vector) -> HnswIndex:
    index.insert(doc_id, vector)
    return index


def hnsw_search(index: HnswIndex, query, k: int, ef_search: int | None = None) -> SearchResult:
    return index.search(query, k, ef_search)
