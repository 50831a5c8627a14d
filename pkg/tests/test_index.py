import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from relgrade.errors import DomainError, FormatError, UsageError
from relgrade.index import (
    BruteForceIndex,
    HnswIndex,
    HnswParams,
    SearchResult,
    bf_insert,
    bf_search,
    hnsw_insert,
    hnsw_search,
    rank_hits,
    recall_at_k,
)
from relgrade.index.hnsw import MAGIC

from conftest import unit_rows


def build_hnsw(vectors, m=8, efc=64, seed=0, heuristic=False):
    index = HnswIndex(params=HnswParams(m=m, ef_construction=efc, heuristic=heuristic), seed=seed)
    for i, v in enumerate(vectors):
        index.insert(f"n{i:04d}", v)
    return index


def build_brute(vectors):
    index = BruteForceIndex()
    for i, v in enumerate(vectors):
        index.insert(f"n{i:04d}", v)
    return index


class TestBruteForce:
    def test_insert_counts(self):
        index = BruteForceIndex()
        bf_insert(index, "a", [1.0, 0.0])
        assert len(index) == 1
        bf_insert(index, "b", [0.0, 1.0])
        bf_insert(index, "c", [1.0, 1.0])
        assert len(index) == 3

    def test_duplicate(self):
        index = bf_insert(BruteForceIndex(), "a", [1.0, 0.0])
        with pytest.raises(UsageError):
            bf_insert(index, "a", [0.0, 1.0])

    def test_dimension_checked(self):
        index = bf_insert(BruteForceIndex(), "a", [1.0, 0.0])
        with pytest.raises(UsageError):
            index.insert("b", [1.0, 0.0, 0.0])

    def test_top1(self):
        index = BruteForceIndex()
        index.insert("A", [1.0, 0.0])
        index.insert("B", [0.0, 1.0])
        result = bf_search(index, [1.0, 0.1], 1)
        assert result.ids == ["A"]
        assert result.scores[0] == pytest.approx(1 / np.sqrt(1.01))

    def test_k_larger_than_index(self):
        index = BruteForceIndex()
        for name, v in [("a", [1, 0]), ("b", [0, 1]), ("c", [1, 1])]:
            index.insert(name, v)
        result = index.search([1.0, 0.2], 10)
        assert result.ids == ["a", "c", "b"]

    def test_exact_match_first(self, rng):
        vecs = unit_rows(rng, 20, 6)
        index = build_brute(vecs)
        result = index.search(vecs[7] * 3.0, 3)
        assert result.ids[0] == "n0007"
        assert result.scores[0] == pytest.approx(1.0, abs=1e-12)

    def test_ties_by_doc_id(self):
        index = BruteForceIndex()
        for name in ["z", "m", "a"]:
            index.insert(name, [1.0, 0.0])
        assert index.search([1.0, 0.0], 2).ids == ["a", "m"]

    def test_empty(self):
        with pytest.raises(DomainError):
            BruteForceIndex(dim=2).search([1.0, 0.0], 1)

    def test_bad_k(self):
        index = bf_insert(BruteForceIndex(), "a", [1.0, 0.0])
        with pytest.raises(UsageError):
            index.search([1.0, 0.0], 0)


class TestResults:
    def test_rank_hits_tie_at_cutoff(self):
        result = rank_hits(["c", "b", "a", "d"], np.array([0.5, 0.9, 0.5, 0.1]), 2)
        assert result.ids == ["b", "a"]

    def test_recall_examples(self):
        exact = SearchResult([(x, 1.0) for x in "abcde"])
        assert recall_at_k(exact, exact, 5) == 1.0
        assert recall_at_k(SearchResult([(x, 1.0) for x in "vwxyz"]), exact, 5) == 0.0
        assert recall_at_k(SearchResult([(x, 1.0) for x in "abcdz"]), exact, 5) == 0.8

    def test_recall_needs_k_exact_hits(self):
        with pytest.raises(UsageError):
            recall_at_k(SearchResult(), SearchResult([("a", 1.0)]), 2)


class TestHnswBasics:
    def test_first_insert_is_entry(self):
        index = hnsw_insert(HnswIndex(), "only", [0.3, 0.4])
        assert index.entry_point == 0
        assert index.max_level == index.level_of("only")
        assert index.neighbors("only", 0) == []
        assert hnsw_search(index, [1.0, 0.0], 1).ids == ["only"]

    def test_duplicate(self):
        index = hnsw_insert(HnswIndex(), "a", [1.0, 0.0])
        with pytest.raises(UsageError):
            index.insert("a", [0.0, 1.0])

    def test_empty_search(self):
        with pytest.raises(DomainError):
            HnswIndex(dim=3).search([1.0, 0.0, 0.0], 1)

    def test_ef_below_k(self, rng):
        index = build_hnsw(unit_rows(rng, 10, 4))
        with pytest.raises(UsageError):
            index.search(np.ones(4), 5, ef_search=3)

    def test_degree_bound_m8(self, rng):
        index = build_hnsw(unit_rows(rng, 100, 16), m=8)
        for name in index.ids:
            assert len(index.neighbors(name, 0)) <= 16
            for layer in range(1, index.level_of(name) + 1):
                assert len(index.neighbors(name, layer)) <= 8
        assert index.validate() == []

    def test_level_distribution(self):
        index = HnswIndex(params=HnswParams(m=16), seed=5)
        levels = np.array([index.draw_level() for _ in range(20000)])
        # P(level >= 1) = 1/M for level_scale = 1/ln M
        assert np.mean(levels >= 1) == pytest.approx(1 / 16, abs=0.006)
        assert levels.min() == 0

    def test_layer_nesting(self, rng):
        index = build_hnsw(unit_rows(rng, 300, 8), m=4)
        assert index.max_level >= 1
        for layer in range(index.max_level + 1):
            above = set(index.layer_nodes(layer + 1))
            assert above <= set(index.layer_nodes(layer))
        assert len(index.layer_nodes(0)) == 300

    def test_results_sorted_unique(self, rng):
        vecs = unit_rows(rng, 200, 12)
        index = build_hnsw(vecs)
        for q in unit_rows(rng, 20, 12):
            result = index.search(q, 10, ef_search=40)
            assert len(set(result.ids)) == len(result.ids) == 10
            assert all(a >= b for a, b in zip(result.scores, result.scores[1:]))

    def test_scores_match_brute_force(self, rng):
        vecs = unit_rows(rng, 150, 10)
        hnsw, brute = build_hnsw(vecs), build_brute(vecs)
        q = rng.standard_normal(10)
        approx = dict(hnsw.search(q, 5, ef_search=150).hits)
        exact = dict(brute.search(q, 150).hits)
        for doc_id, score in approx.items():
            assert score == pytest.approx(exact[doc_id], abs=1e-12)

    def test_heuristic_variant_valid(self, rng):
        vecs = unit_rows(rng, 200, 8)
        index = build_hnsw(vecs, heuristic=True)
        assert index.validate() == []
        brute = build_brute(vecs)
        q = rng.standard_normal(8)
        assert set(index.search(q, 5, ef_search=200).ids) == set(brute.search(q, 5).ids)

    def test_validate_detects_corruption(self, rng):
        index = build_hnsw(unit_rows(rng, 50, 4))
        index._l0_links[3, 0] = 3
        assert any("self loop" in p for p in index.validate())

    def test_concurrent_insert_during_search_rejected(self, rng):
        index = build_hnsw(unit_rows(rng, 20, 4))
        with index._guard(writing=False):
            with pytest.raises(UsageError):
                index.insert("late", np.ones(4))

    def test_concurrent_searches_allowed(self, rng):
        vecs = unit_rows(rng, 300, 8)
        index = build_hnsw(vecs)
        queries = unit_rows(rng, 40, 8)
        expected = [index.search(q, 5).ids for q in queries]
        got = [None] * len(queries)
        errors = []

        def worker(offset):
            try:
                for i in range(offset, len(queries), 4):
                    got[i] = index.search(queries[i], 5).ids
            except Exception as exc:  # pragma: no cover
                errors.append(exc)

        threads = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert not errors
        assert got == expected


class TestHnswSerialization:
    def test_round_trip(self, rng, tmp_path):
        vecs = unit_rows(rng, 120, 6)
        index = build_hnsw(vecs, seed=9)
        path = tmp_path / "idx.hnsw"
        index.save(path)
        loaded = HnswIndex.load(path)
        assert loaded.to_bytes() == index.to_bytes()
        assert loaded.ids == index.ids
        for q in unit_rows(rng, 5, 6):
            assert loaded.search(q, 4).hits == index.search(q, 4).hits

    def test_loaded_index_keeps_growing_identically(self, rng):
        vecs = unit_rows(rng, 80, 6)
        full = build_hnsw(vecs, seed=2)
        half = build_hnsw(vecs[:40], seed=2)
        resumed = HnswIndex.from_bytes(half.to_bytes())
        for i in range(40, 80):
            resumed.insert(f"n{i:04d}", vecs[i])
        assert resumed.to_bytes() == full.to_bytes()

    def test_heuristic_flag_persisted(self, rng):
        index = build_hnsw(unit_rows(rng, 10, 4), heuristic=True)
        assert HnswIndex.from_bytes(index.to_bytes()).params.heuristic

    def test_deterministic_build(self, rng):
        vecs = unit_rows(rng, 150, 8)
        assert build_hnsw(vecs, seed=4).to_bytes() == build_hnsw(vecs, seed=4).to_bytes()

    def test_seed_matters(self, rng):
        vecs = unit_rows(rng, 150, 8)
        assert build_hnsw(vecs, seed=4).to_bytes() != build_hnsw(vecs, seed=5).to_bytes()

    def test_empty_round_trip(self):
        index = HnswIndex(dim=3)
        assert len(HnswIndex.from_bytes(index.to_bytes())) == 0

    def test_bad_magic(self, rng):
        data = bytearray(build_hnsw(unit_rows(rng, 5, 3)).to_bytes())
        data[:8] = b"NOTANIDX"
        with pytest.raises(FormatError):
            HnswIndex.from_bytes(bytes(data))

    def test_bad_version(self, rng):
        data = bytearray(build_hnsw(unit_rows(rng, 5, 3)).to_bytes())
        data[8] = 99
        with pytest.raises(FormatError):
            HnswIndex.from_bytes(bytes(data))

    def test_truncated_and_trailing(self, rng):
        data = build_hnsw(unit_rows(rng, 5, 3)).to_bytes()
        assert data.startswith(MAGIC)
        with pytest.raises(FormatError):
            HnswIndex.from_bytes(data[:-3])
        with pytest.raises(FormatError):
            HnswIndex.from_bytes(data + b"\x00")


@st.composite
def small_corpora(draw):
    n = draw(st.integers(1, 60))
    dim = draw(st.integers(2, 12))
    seed = draw(st.integers(0, 2**32 - 1))
    return n, dim, seed


class TestHnswProperties:
    @settings(max_examples=40, deadline=None)
    @given(small_corpora(), st.integers(1, 10))
    def test_exhaustive_ef_matches_oracle(self, corpus, k):
        n, dim, seed = corpus
        rng = np.random.default_rng(seed)
        vecs = unit_rows(rng, n, dim)
        hnsw, brute = build_hnsw(vecs, m=4, efc=16, seed=seed), build_brute(vecs)
        q = rng.standard_normal(dim)
        k = min(k, n)
        assert hnsw.search(q, k, ef_search=max(n, k)).ids == brute.search(q, k).ids

    @settings(max_examples=30, deadline=None)
    @given(small_corpora())
    def test_invariants_after_every_insert(self, corpus):
        n, dim, seed = corpus
        rng = np.random.default_rng(seed)
        index = HnswIndex(params=HnswParams(m=3, ef_construction=8), seed=seed)
        for i, v in enumerate(unit_rows(rng, n, dim)):
            index.insert(f"x{i}", v)
            assert index.validate() == []
