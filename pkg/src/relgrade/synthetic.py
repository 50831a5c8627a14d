"""Seeded generators for planted-relevance corpora.

Every query gets a random unit direction ``u``. Its documents come in three
kinds:

* positives: ``u + sigma * g``, renormalized, with ``g ~ N(0, I/dim)`` and
  ``sigma = noise * U(0.5, 1.5)``. Cosine to the query is roughly
  ``1 / sqrt(1 + sigma^2)``.
* distractors: ``u`` with its *topic* coordinates negated, plus the same
  noise. The topic coordinates are a fixed, axis-aligned block shared by all
  queries, so distractors keep a moderate cosine (about ``1 - 2 *
  topic_fraction`` before noise) while disagreeing with the query exactly
  where relevance lives.
* background: uniform on the sphere, cosine near zero.

Negatives (distractors plus background) therefore form two modes and the
pooled cosine histogram is bimodal. A cosine threshold confuses the
distractor mode with weak positives; a linear head over ``q * d`` can
separate them.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from relgrade.corpus import (
    DEFAULT_CATEGORIES,
    DEFAULT_FIELDS,
    Corpus,
    Document,
    PairRecord,
    Query,
    document_to_json,
    query_to_json,
    write_jsonl,
    write_pairs,
)
from relgrade.errors import UsageError
from relgrade.grading.gold import GoldLabel, write_gold
from relgrade.training.data import round_half_up

DOCUMENTS_FILE = "documents.jsonl"
QUERIES_FILE = "queries.jsonl"
GOLD_FILE = "gold.jsonl"
PAIRS_FILE = "pairs.jsonl"


@dataclass(frozen=True)
class SyntheticSpec:
    dim: int = 384
    n_documents: int = 10_000
    n_queries: int = 160
    positive_rate: float = 0.123
    noise: float = 1.0
    seed: int = 0
    topic_fraction: float = 0.125
    distractor_fraction: float = 0.5
    n_days: int = 30
    start_date: dt.date = field(default=dt.date(2024, 1, 1))

    def __post_init__(self) -> None:
        if self.dim < 2:
            raise UsageError("dim must be at least 2")
        if self.n_documents < 1 or self.n_queries < 1 or self.n_days < 1:
            raise UsageError("document, query and day counts must be at least 1")
        if not 0.0 < self.positive_rate < 1.0:
            raise UsageError("positive_rate must lie strictly between 0 and 1")
        if self.noise <= 0:
            raise UsageError("noise must be positive")
        if not 0.0 < self.topic_fraction < 1.0 or self.n_topic < 1:
            raise UsageError("topic_fraction must select at least one coordinate and leave one out")
        if not 0.0 <= self.distractor_fraction <= 1.0:
            raise UsageError("distractor_fraction must lie in [0, 1]")

    @property
    def n_topic(self) -> int:
        return min(self.dim - 1, max(0, round_half_up(self.dim * self.topic_fraction)))

    @property
    def n_positive(self) -> int:
        return round_half_up(self.positive_rate * self.n_documents)


@dataclass
class SyntheticDataset:
    corpus: Corpus
    gold: list[GoldLabel]
    pairs: list[PairRecord]
    spec: SyntheticSpec

    def write(self, out_dir) -> dict[str, Path]:
        """Write documents, queries, gold labels and planted pairs as JSONL."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        paths = {name: out / name for name in (DOCUMENTS_FILE, QUERIES_FILE, GOLD_FILE, PAIRS_FILE)}
        docs = sorted(self.corpus.documents.values(), key=lambda d: d.doc_id)
        write_jsonl(paths[DOCUMENTS_FILE], (document_to_json(d) for d in docs))
        queries = sorted(self.corpus.queries.values(), key=lambda q: q.query_id)
        write_jsonl(paths[QUERIES_FILE], (query_to_json(q) for q in queries))
        write_gold(paths[GOLD_FILE], self.gold)
        write_pairs(paths[PAIRS_FILE], self.pairs)
        return paths


def random_unit_vectors(n: int, dim: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` vectors drawn uniformly from the unit sphere in ``dim`` dimensions."""
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def _noisy(base: np.ndarray, noise: float, rng: np.random.Generator) -> np.ndarray:
    n, dim = base.shape
    sigma = noise * rng.uniform(0.5, 1.5, size=(n, 1))
    x = base + sigma * rng.standard_normal((n, dim)) / np.sqrt(dim)
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def generate(spec: SyntheticSpec = SyntheticSpec()) -> SyntheticDataset:
    """Build a corpus with one planted (query, document) pair per document.

    Exactly ``round_half_up(positive_rate * n_documents)`` pairs are relevant.
    Documents are dealt to queries round-robin over a seeded permutation, so
    every query owns a similar mix. The planted pair's retrieval date is the
    document's date and its rank orders the query's documents of that day by
    cosine. Gold labels carry no date and so apply on every retrieval day.
    """
    rng = np.random.default_rng(spec.seed)
    dim, n_docs = spec.dim, spec.n_documents
    directions = random_unit_vectors(spec.n_queries, dim, rng)

    n_pos = spec.n_positive
    n_dis = round_half_up((n_docs - n_pos) * spec.distractor_fraction)
    kind = np.zeros(n_docs, dtype=np.int8)  # 0 positive, 1 distractor, 2 background
    kind[n_pos:n_pos + n_dis] = 1
    kind[n_pos + n_dis:] = 2
    order = rng.permutation(n_docs)
    kind = kind[order]
    owner = np.empty(n_docs, dtype=np.int64)
    owner[rng.permutation(n_docs)] = np.arange(n_docs) % spec.n_queries

    flip = np.ones(dim)
    flip[: spec.n_topic] = -1.0
    base = directions[owner]
    emb = np.empty((n_docs, dim))
    is_pos, is_dis, is_bg = kind == 0, kind == 1, kind == 2
    emb[is_pos] = _noisy(base[is_pos], spec.noise, rng)
    emb[is_dis] = _noisy(base[is_dis] * flip, spec.noise, rng)
    emb[is_bg] = random_unit_vectors(int(is_bg.sum()), dim, rng)
    days = rng.integers(0, spec.n_days, size=n_docs)

    corpus = Corpus(dim)
    query_ids = [f"q{i:04d}" for i in range(spec.n_queries)]
    for i, qid in enumerate(query_ids):
        corpus.add_query(Query(
            qid, DEFAULT_FIELDS[i % len(DEFAULT_FIELDS)],
            DEFAULT_CATEGORIES[i % len(DEFAULT_CATEGORIES)],
            f"synthetic question {qid}", directions[i],
        ))
    doc_ids = [f"d{i:06d}" for i in range(n_docs)]
    for i, did in enumerate(doc_ids):
        date = spec.start_date + dt.timedelta(days=int(days[i]))
        corpus.add_document(Document(did, date, "synthetic", emb[i], f"synthetic document {did}"))

    cosines = np.clip(np.einsum("ij,ij->i", emb, base), -1.0, 1.0)
    # rank within (query, date) by descending cosine, ties by doc id
    groups: dict[tuple[int, int], list[int]] = {}
    for i in range(n_docs):
        groups.setdefault((int(owner[i]), int(days[i])), []).append(i)
    rank = np.empty(n_docs, dtype=np.int64)
    for members in groups.values():
        members.sort(key=lambda i: (-cosines[i], i))
        for r, i in enumerate(members, start=1):
            rank[i] = r

    pairs, gold = [], []
    for i in range(n_docs):
        qid, label = query_ids[owner[i]], bool(is_pos[i])
        date = spec.start_date + dt.timedelta(days=int(days[i]))
        pairs.append(PairRecord(qid, doc_ids[i], date, int(rank[i]), float(cosines[i]), label))
        gold.append(GoldLabel(qid, doc_ids[i], None, label))
    pairs.sort(key=lambda p: (p.retrieval_date, p.query_id, p.rank))
    gold.sort(key=lambda g: (g.query_id, g.doc_id))
    return SyntheticDataset(corpus, gold, pairs, spec)
