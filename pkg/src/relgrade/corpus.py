"""Documents, queries and the query-document pair dataset.

Pairs are produced by replaying a daily retrieval: for every date in a
window, each query is searched against the documents published on or before
that date and its top-k hits become :class:`PairRecord` rows.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import logging
from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Sequence

import numpy as np

from relgrade.errors import DomainError, FormatError, UsageError
from relgrade.index import BruteForceIndex, HnswIndex, HnswParams
from relgrade.vectormath import as_vector, cosine_similarity

logger = logging.getLogger(__name__)

DEFAULT_FIELDS = (
    "Pharmacy",
    "Venture Capital",
    "Information Technology",
    "Legal",
    "Banking",
    "Healthcare",
    "Automotive",
    "Residential Construction",
)

DEFAULT_CATEGORIES = (
    "R&D", "Technology", "Regulations", "Market", "Manufacturing", "Hiring",
    "Sustainability", "B2B", "Security", "Industry", "Leadership", "Economy", "Finance",
)

SPLITS = ("train", "test")


@dataclass
class Document:
    doc_id: str
    date: dt.date
    source: str
    embedding: np.ndarray
    text: str | None = None


@dataclass
class Query:
    query_id: str
    field: str
    category: str
    text: str
    embedding: np.ndarray


PairKey = tuple[str, str, dt.date]


@dataclass
class PairRecord:
    query_id: str
    doc_id: str
    retrieval_date: dt.date
    rank: int
    cosine: float
    label: bool | None = None
    split: str | None = None

    @property
    def key(self) -> PairKey:
        return (self.query_id, self.doc_id, self.retrieval_date)

    def to_json(self) -> dict:
        out = {
            "query_id": self.query_id,
            "doc_id": self.doc_id,
            "retrieval_date": self.retrieval_date.isoformat(),
            "rank": self.rank,
            "cosine": self.cosine,
        }
        if self.label is not None:
            out["label"] = self.label
        if self.split is not None:
            out["split"] = self.split
        return out

    @classmethod
    def from_json(cls, obj: dict) -> "PairRecord":
        label = obj.get("label")
        if label is not None and not isinstance(label, bool):
            raise ValueError("label must be true, false or absent")
        split = obj.get("split")
        if split is not None and split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}")
        rank = obj["rank"]
        if not isinstance(rank, int) or isinstance(rank, bool) or rank < 1:
            raise ValueError("rank must be a positive integer")
        return cls(
            query_id=_str(obj, "query_id"),
            doc_id=_str(obj, "doc_id"),
            retrieval_date=_date(obj["retrieval_date"]),
            rank=rank,
            cosine=float(obj["cosine"]),
            label=label,
            split=split,
        )


def _str(obj: dict, key: str) -> str:
    value = obj[key]
    if not isinstance(value, str):
        raise ValueError(f"{key} must be a string")
    return value


def _date(value) -> dt.date:
    if not isinstance(value, str):
        raise ValueError("dates must be ISO-8601 strings")
    return dt.date.fromisoformat(value)


def iter_jsonl(path) -> Iterator[tuple[int, dict]]:
    """Yield ``(line_number, object)`` for each non-blank line of a JSONL file."""
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"invalid JSON: {exc.msg}", path, lineno) from None
            if not isinstance(obj, dict):
                raise FormatError("each line must be a JSON object", path, lineno)
            yield lineno, obj


def write_jsonl(path, rows: Iterable[dict]) -> int:
    count = 0
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":"), ensure_ascii=False))
            fh.write("\n")
            count += 1
    return count


def _embedding(obj: dict, dim: int | None) -> np.ndarray:
    values = obj["embedding"]
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ValueError("embedding must be an array of numbers")
    return as_vector(values, dim)


def document_to_json(doc: Document) -> dict:
    out = {
        "doc_id": doc.doc_id,
        "date": doc.date.isoformat(),
        "source": doc.source,
        "embedding": [float(v) for v in doc.embedding],
    }
    if doc.text is not None:
        out["text"] = doc.text
    return out


def query_to_json(query: Query) -> dict:
    return {
        "query_id": query.query_id,
        "field": query.field,
        "category": query.category,
        "text": query.text,
        "embedding": [float(v) for v in query.embedding],
    }


class Corpus:
    """In-memory store of documents and queries sharing one embedding dim.

    ``dim`` is fixed by the first record ingested when not given.
    """

    def __init__(self, dim: int | None = None, fields: Sequence[str] = DEFAULT_FIELDS) -> None:
        self.dim = dim
        self.fields = tuple(fields)
        self.documents: dict[str, Document] = {}
        self.queries: dict[str, Query] = {}

    def add_document(self, doc: Document) -> None:
        if doc.doc_id in self.documents:
            raise UsageError(f"duplicate doc_id {doc.doc_id!r}")
        doc.embedding = as_vector(doc.embedding, self.dim)
        self.dim = doc.embedding.size
        self.documents[doc.doc_id] = doc

    def add_query(self, query: Query) -> None:
        if query.query_id in self.queries:
            raise UsageError(f"duplicate query_id {query.query_id!r}")
        if query.field not in self.fields:
            raise UsageError(f"unknown field {query.field!r}")
        query.embedding = as_vector(query.embedding, self.dim)
        self.dim = query.embedding.size
        self.queries[query.query_id] = query

    def ingest_documents(self, path) -> int:
        """Load a documents JSONL file; all-or-nothing on any bad line."""
        staged: list[Document] = []
        seen = set(self.documents)
        dim = self.dim
        for lineno, obj in iter_jsonl(path):
            try:
                doc = Document(
                    doc_id=_str(obj, "doc_id"),
                    date=_date(obj["date"]),
                    source=_str(obj, "source"),
                    embedding=_embedding(obj, dim),
                    text=obj.get("text"),
                )
                if doc.text is not None and not isinstance(doc.text, str):
                    raise ValueError("text must be a string")
            except KeyError as exc:
                raise FormatError(f"missing key {exc.args[0]!r}", path, lineno) from None
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
            if doc.doc_id in seen:
                raise FormatError(f"duplicate doc_id {doc.doc_id!r}", path, lineno)
            seen.add(doc.doc_id)
            dim = doc.embedding.size
            staged.append(doc)
        for doc in staged:
            self.add_document(doc)
        return len(staged)

    def ingest_queries(self, path) -> int:
        staged: list[Query] = []
        seen = set(self.queries)
        dim = self.dim
        for lineno, obj in iter_jsonl(path):
            try:
                query = Query(
                    query_id=_str(obj, "query_id"),
                    field=_str(obj, "field"),
                    category=_str(obj, "category"),
                    text=_str(obj, "text"),
                    embedding=_embedding(obj, dim),
                )
            except KeyError as exc:
                raise FormatError(f"missing key {exc.args[0]!r}", path, lineno) from None
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
            if query.query_id in seen:
                raise FormatError(f"duplicate query_id {query.query_id!r}", path, lineno)
            if query.field not in self.fields:
                raise FormatError(f"unknown field {query.field!r}", path, lineno)
            seen.add(query.query_id)
            dim = query.embedding.size
            staged.append(query)
        for query in staged:
            self.add_query(query)
        return len(staged)

    def query_vector(self, query_id: str) -> np.ndarray:
        return self.queries[query_id].embedding

    def doc_vector(self, doc_id: str) -> np.ndarray:
        return self.documents[doc_id].embedding

    def dates(self) -> list[dt.date]:
        return sorted({doc.date for doc in self.documents.values()})


def ingest_documents(corpus: Corpus, path) -> int:
    return corpus.ingest_documents(path)


def read_pairs(path) -> list[PairRecord]:
    pairs = []
    seen: set[PairKey] = set()
    for lineno, obj in iter_jsonl(path):
        try:
            pair = PairRecord.from_json(obj)
        except KeyError as exc:
            raise FormatError(f"missing key {exc.args[0]!r}", path, lineno) from None
        except (TypeError, ValueError) as exc:
            raise FormatError(str(exc), path, lineno) from None
        if pair.key in seen:
            raise FormatError(f"duplicate pair {pair.key}", path, lineno)
        seen.add(pair.key)
        pairs.append(pair)
    return pairs


def write_pairs(path, pairs: Iterable[PairRecord]) -> int:
    return write_jsonl(path, (p.to_json() for p in pairs))


def date_range(start: dt.date, end: dt.date) -> list[dt.date]:
    if end < start:
        raise UsageError(f"empty date window {start}..{end}")
    return [start + dt.timedelta(days=i) for i in range((end - start).days + 1)]


@dataclass
class RetrievalConfig:
    k: int = 5
    index: str = "hnsw"  # "hnsw" or "brute"
    hnsw: HnswParams = field(default_factory=HnswParams)
    seed: int = 0
    dedupe: bool = False


def snapshot_order(corpus: Corpus) -> list[Document]:
    """Insertion order used for every index built over the corpus."""
    return sorted(corpus.documents.values(), key=lambda d: (d.date, d.doc_id))


def build_index(corpus: Corpus, config: RetrievalConfig, until: dt.date | None = None):
    index = _new_index(corpus, config)
    for doc in snapshot_order(corpus):
        if until is not None and doc.date > until:
            break
        index.insert(doc.doc_id, doc.embedding)
    return index


def _new_index(corpus: Corpus, config: RetrievalConfig):
    if config.index == "brute":
        return BruteForceIndex(corpus.dim)
    if config.index == "hnsw":
        return HnswIndex(corpus.dim, config.hnsw, seed=config.seed)
    raise UsageError(f"unknown index type {config.index!r}")


def generate_pairs(
    corpus: Corpus,
    window: tuple[dt.date, dt.date],
    config: RetrievalConfig | None = None,
    queries: Iterable[Query] | None = None,
) -> list[PairRecord]:
    """Replay the daily top-k retrieval over ``window`` (inclusive).

    A single append-only index is grown in (date, doc_id) order, so the
    state searched on day D is exactly the snapshot of documents dated <= D.
    Repeated (query, doc) hits on different days are separate records unless
    ``config.dedupe`` is set, in which case only the earliest is kept.
    """
    config = config or RetrievalConfig()
    if config.k < 1:
        raise UsageError("k must be at least 1")
    days = date_range(*window)
    qs = sorted(queries if queries is not None else corpus.queries.values(),
                key=lambda q: q.query_id)
    ordered = snapshot_order(corpus)
    if not ordered or ordered[0].date > days[-1]:
        raise DomainError("no documents are dated within or before the window")

    index = _new_index(corpus, config)
    ef = max(config.hnsw.ef_search, config.k)
    pos = 0
    seen: set[tuple[str, str]] = set()
    pairs: list[PairRecord] = []
    for day in days:
        while pos < len(ordered) and ordered[pos].date <= day:
            index.insert(ordered[pos].doc_id, ordered[pos].embedding)
            pos += 1
        if len(index) == 0:
            logger.info("no documents available on %s; emitting no pairs", day)
            continue
        for query in qs:
            if isinstance(index, HnswIndex):
                result = index.search(query.embedding, config.k, ef)
            else:
                result = index.search(query.embedding, config.k)
            for rank, doc_id in enumerate(result.ids, start=1):
                if config.dedupe:
                    if (query.query_id, doc_id) in seen:
                        continue
                    seen.add((query.query_id, doc_id))
                cos = cosine_similarity(query.embedding, corpus.documents[doc_id].embedding)
                pairs.append(PairRecord(query.query_id, doc_id, day, rank, cos))
    pairs.sort(key=lambda p: (p.retrieval_date, p.query_id, p.rank))
    return pairs


def positive_fraction(pairs: Sequence[PairRecord]) -> float:
    """Share of labeled pairs that are relevant."""
    labeled = [p.label for p in pairs if p.label is not None]
    if not labeled:
        raise DomainError("no labeled pairs")
    return sum(labeled) / len(labeled)


def with_labels(pairs: Sequence[PairRecord], labels: dict[PairKey, bool]) -> list[PairRecord]:
    return [replace(p, label=labels.get(p.key, p.label)) for p in pairs]


@dataclass
class Histogram:
    edges: np.ndarray
    total: np.ndarray
    positive: np.ndarray | None = None
    negative: np.ndarray | None = None

    def rows(self) -> list[dict]:
        out = []
        for i in range(len(self.total)):
            out.append({
                "bin_lo": float(self.edges[i]),
                "bin_hi": float(self.edges[i + 1]),
                "count_total": int(self.total[i]),
                "count_positive": "" if self.positive is None else int(self.positive[i]),
                "count_negative": "" if self.negative is None else int(self.negative[i]),
            })
        return out

    def to_csv(self, path) -> None:
        columns = ["bin_lo", "bin_hi", "count_total", "count_positive", "count_negative"]
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.DictWriter(fh, fieldnames=columns, lineterminator="\n")
            writer.writeheader()
            for row in self.rows():
                row["bin_lo"] = f"{row['bin_lo']:.6f}"
                row["bin_hi"] = f"{row['bin_hi']:.6f}"
                writer.writerow(row)


def similarity_histogram(pairs: Sequence[PairRecord], bins: int = 50, by_label: bool = True) -> Histogram:
    """Histogram of pair cosines over [min, max], optionally split by label."""
    if not pairs:
        raise DomainError("cannot histogram an empty pair list")
    if bins < 1:
        raise UsageError("bins must be positive")
    cos = np.array([p.cosine for p in pairs], dtype=np.float64)
    lo, hi = float(cos.min()), float(cos.max())
    if lo == hi:
        lo, hi = lo - 0.5 / bins, hi + 0.5 / bins
    edges = np.linspace(lo, hi, bins + 1)
    total, _ = np.histogram(cos, bins=edges)
    if not by_label:
        return Histogram(edges, total)
    if any(p.label is None for p in pairs):
        raise UsageError("by_label histogram requires every pair to be labeled")
    mask = np.array([bool(p.label) for p in pairs])
    positive, _ = np.histogram(cos[mask], bins=edges)
    negative, _ = np.histogram(cos[~mask], bins=edges)
    return Histogram(edges, total, positive, negative)

