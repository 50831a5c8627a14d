import filecmp

import numpy as np
import pytest
from scipy.signal import find_peaks

from relgrade.corpus import Corpus, read_pairs, similarity_histogram
from relgrade.errors import UsageError
from relgrade.grading import read_gold
from relgrade.synthetic import SyntheticSpec, generate


def test_rate_contract():
    ds = generate(SyntheticSpec(dim=16, n_documents=1000, n_queries=10, positive_rate=0.5, seed=1))
    assert sum(p.label for p in ds.pairs) == 500


def test_default_rate():
    ds = generate(SyntheticSpec(n_documents=10_000, dim=32, seed=0))
    rate = np.mean([p.label for p in ds.pairs])
    assert abs(rate - 0.123) <= 0.01


def test_unit_norm(small_synth):
    for doc in small_synth.corpus.documents.values():
        assert abs(np.linalg.norm(doc.embedding) - 1.0) < 1e-6
    for query in small_synth.corpus.queries.values():
        assert abs(np.linalg.norm(query.embedding) - 1.0) < 1e-6


def test_cosines_recomputable(small_synth):
    c = small_synth.corpus
    for p in small_synth.pairs[:200]:
        assert p.cosine == pytest.approx(float(c.query_vector(p.query_id) @ c.doc_vector(p.doc_id)), abs=1e-12)


@pytest.mark.parametrize("noise", [0.5, 1.0, 1.5])
def test_positive_margin(noise):
    ds = generate(SyntheticSpec(dim=64, n_documents=2000, n_queries=20, noise=noise, seed=2))
    cos = np.array([p.cosine for p in ds.pairs])
    y = np.array([p.label for p in ds.pairs])
    # positives sit near 1/sqrt(1+noise^2), negatives average (1 - 2f)/2 of that
    assert cos[y].mean() - cos[~y].mean() > 0.3 / np.sqrt(1 + noise**2)


def test_bimodal_negatives():
    ds = generate(SyntheticSpec(dim=128, n_documents=5000, n_queries=40, seed=4))
    hist = similarity_histogram(ds.pairs, bins=40)
    peaks, _ = find_peaks(np.r_[0, hist.total, 0], prominence=50)
    assert len(peaks) >= 2
    neg_peaks, _ = find_peaks(np.r_[0, hist.negative, 0], prominence=50)
    assert len(neg_peaks) == 2


def test_rank_and_dates(small_synth):
    spec = small_synth.spec
    groups = {}
    for p in small_synth.pairs:
        assert 0 <= (p.retrieval_date - spec.start_date).days < spec.n_days
        assert small_synth.corpus.documents[p.doc_id].date == p.retrieval_date
        groups.setdefault((p.query_id, p.retrieval_date), []).append(p)
    for members in groups.values():
        members.sort(key=lambda p: p.rank)
        assert [p.rank for p in members] == list(range(1, len(members) + 1))
        assert all(a.cosine >= b.cosine for a, b in zip(members, members[1:]))


def test_deterministic_files(tmp_path):
    spec = SyntheticSpec(dim=8, n_documents=200, n_queries=5, seed=9)
    generate(spec).write(tmp_path / "a")
    generate(spec).write(tmp_path / "b")
    names = ["documents.jsonl", "queries.jsonl", "gold.jsonl", "pairs.jsonl"]
    match, mismatch, errors = filecmp.cmpfiles(tmp_path / "a", tmp_path / "b", names, shallow=False)
    assert match == names
    generate(SyntheticSpec(dim=8, n_documents=200, n_queries=5, seed=10)).write(tmp_path / "c")
    assert not filecmp.cmp(tmp_path / "a" / "documents.jsonl", tmp_path / "c" / "documents.jsonl", shallow=False)


def test_written_files_load(tmp_path, small_synth):
    paths = small_synth.write(tmp_path)
    corpus = Corpus()
    assert corpus.ingest_documents(paths["documents.jsonl"]) == 1000
    assert corpus.ingest_queries(paths["queries.jsonl"]) == 20
    gold = read_gold(paths["gold.jsonl"])
    assert len(gold) == 1000 and all(g.retrieval_date is None for g in gold)
    assert read_pairs(paths["pairs.jsonl"]) == small_synth.pairs


@pytest.mark.parametrize("kwargs", [
    {"dim": 1}, {"n_documents": 0}, {"n_queries": 0}, {"positive_rate": 0.0},
    {"positive_rate": 1.0}, {"noise": 0.0}, {"n_days": 0}, {"topic_fraction": 0.0},
])
def test_degenerate_spec(kwargs):
    with pytest.raises(UsageError):
        SyntheticSpec(**kwargs)
