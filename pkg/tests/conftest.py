import datetime as dt

import numpy as np
import pytest

from relgrade.corpus import Corpus, Document, PairRecord, Query
from relgrade.synthetic import SyntheticSpec, generate

DAY0 = dt.date(2024, 3, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def unit_rows(rng, n, dim):
    x = rng.standard_normal((n, dim))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def make_corpus(rng, n_docs=30, n_queries=3, dim=8, n_days=3, text=True):
    corpus = Corpus(dim)
    for i, v in enumerate(unit_rows(rng, n_docs, dim)):
        corpus.add_document(Document(
            f"d{i:03d}", DAY0 + dt.timedelta(days=i % n_days), "wire", v,
            f"document {i}" if text else None,
        ))
    for i, v in enumerate(unit_rows(rng, n_queries, dim)):
        corpus.add_query(Query(f"q{i}", "Banking", "Finance", f"question {i}", v))
    return corpus


@pytest.fixture
def small_corpus(rng):
    return make_corpus(rng)


def pair(query_id="q0", doc_id="d000", day=DAY0, rank=1, cosine=0.5, label=None):
    return PairRecord(query_id, doc_id, day, rank, cosine, label)


@pytest.fixture(scope="session")
def small_synth():
    return generate(SyntheticSpec(dim=32, n_documents=1000, n_queries=20, seed=3))
