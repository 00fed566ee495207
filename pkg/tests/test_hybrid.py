"""Tests for score normalization and sparse/dense fusion."""
from __future__ import annotations

import pytest

from citeqa import (
    HybridConfig,
    RetrievalResult,
    ScoredDoc,
    fuse_hybrid,
    normalize_scores,
    search_hybrid,
    search_hybrid_excluding,
    search_sparse,
)


def result(source: str, pairs: list[tuple[str, float]], query: str = "q") -> RetrievalResult:
    entries = tuple(
        ScoredDoc(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(pairs, start=1)
    )
    return RetrievalResult(query_text=query, entries=entries, source=source)


class TestNormalizeScores:
    def test_min_max_scaling(self):
        entries = result("sparse", [("a", 9.0), ("b", 5.0), ("c", 1.0)]).entries
        normalized = normalize_scores(entries)
        assert [e.score for e in normalized] == [1.0, 0.5, 0.0]
        assert [e.doc_id for e in normalized] == ["a", "b", "c"]
        assert [e.rank for e in normalized] == [1, 2, 3]

    def test_all_equal_maps_to_one(self):
        entries = result("dense", [("a", 0.3), ("b", 0.3)]).entries
        assert [e.score for e in normalize_scores(entries)] == [1.0, 1.0]

    def test_single_entry_maps_to_one(self):
        entries = result("dense", [("a", -7.0)]).entries
        assert [e.score for e in normalize_scores(entries)] == [1.0]

    def test_empty_stays_empty(self):
        assert normalize_scores(()) == []

    def test_negative_scores_land_in_unit_interval(self):
        entries = result("sparse", [("a", -1.0), ("b", -3.0), ("c", -5.0)]).entries
        assert [e.score for e in normalize_scores(entries)] == [1.0, 0.5, 0.0]


class TestFuseHybrid:
    def test_hand_computed_fusion(self):
        # sparse normalized: a=1, b=0; dense normalized: b=1, c=0.
        # alpha=0.65: a = 0.65, b = 0.35, c = 0.
        sparse = result("sparse", [("a", 4.0), ("b", 2.0)])
        dense = result("dense", [("b", 0.9), ("c", 0.1)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=0.65, pool_size=5, final_k=3))
        scores = {entry.doc_id: entry.score for entry in fused.entries}
        assert scores["a"] == pytest.approx(0.65, abs=1e-12)
        assert scores["b"] == pytest.approx(0.35, abs=1e-12)
        assert scores["c"] == pytest.approx(0.0, abs=1e-12)
        assert fused.source == "hybrid"
        assert fused.doc_ids() == ["a", "b", "c"]

    def test_alpha_one_reproduces_sparse_ranking(self):
        sparse = result("sparse", [("a", 4.0), ("b", 2.0), ("c", 1.0)])
        dense = result("dense", [("c", 0.9), ("b", 0.5), ("a", 0.1)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=1.0, pool_size=5, final_k=3))
        assert fused.doc_ids() == ["a", "b", "c"]
        assert [e.score for e in fused.entries] == [1.0, pytest.approx(1.0 / 3.0), 0.0]

    def test_alpha_zero_reproduces_dense_ranking(self):
        sparse = result("sparse", [("a", 4.0), ("b", 2.0), ("c", 1.0)])
        dense = result("dense", [("c", 0.9), ("b", 0.5), ("a", 0.1)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=0.0, pool_size=5, final_k=3))
        assert fused.doc_ids() == ["c", "b", "a"]

    def test_absent_side_contributes_zero(self):
        sparse = result("sparse", [("only_sparse", 3.0), ("shared", 1.0)])
        dense = result("dense", [("shared", 0.8), ("only_dense", 0.2)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=0.5, pool_size=5, final_k=4))
        scores = {entry.doc_id: entry.score for entry in fused.entries}
        assert scores["only_sparse"] == pytest.approx(0.5)
        assert scores["only_dense"] == pytest.approx(0.0)
        assert scores["shared"] == pytest.approx(0.5)

    def test_query_mismatch_rejected(self):
        sparse = result("sparse", [("a", 1.0)], query="first")
        dense = result("dense", [("a", 1.0)], query="second")
        with pytest.raises(ValueError, match="different queries"):
            fuse_hybrid(sparse, dense)

    def test_pool_overflow_rejected(self):
        big = [(f"d{i}", float(9 - i)) for i in range(4)]
        config = HybridConfig(pool_size=3, final_k=2)
        with pytest.raises(ValueError, match="sparse pool"):
            fuse_hybrid(result("sparse", big), result("dense", [("a", 1.0)]), config)
        with pytest.raises(ValueError, match="dense pool"):
            fuse_hybrid(result("sparse", [("a", 1.0)]), result("dense", big), config)

    def test_final_k_cut(self):
        sparse = result("sparse", [(f"d{i}", float(9 - i)) for i in range(5)])
        dense = result("dense", [(f"d{i}", 1.0 - 0.1 * i) for i in range(5)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(pool_size=10, final_k=2))
        assert len(fused.entries) == 2
        assert [entry.rank for entry in fused.entries] == [1, 2]

    def test_empty_sides_fuse_to_all_zero(self):
        sparse = result("sparse", [])
        dense = result("dense", [("a", 0.4), ("b", 0.2)])
        fused = fuse_hybrid(sparse, dense, HybridConfig(alpha=0.65, pool_size=5, final_k=2))
        scores = {entry.doc_id: entry.score for entry in fused.entries}
        assert scores["a"] == pytest.approx(0.35)
        assert scores["b"] == pytest.approx(0.0)


class TestSearchHybrid:
    @pytest.fixture()
    def config(self):
        return HybridConfig(pool_size=6, final_k=4)

    def test_excluded_ids_absent_everywhere(self, indexes, provider, config):
        sparse_index, dense_index = indexes
        full = search_hybrid(sparse_index, dense_index, provider, "store electricity", config)
        top = full.entries[0].doc_id
        trimmed = search_hybrid_excluding(
            sparse_index, dense_index, provider, "store electricity", {top}, config
        )
        assert top not in trimmed.doc_ids()
        assert trimmed.entries

    def test_excluding_everything_is_empty(self, indexes, provider, config):
        sparse_index, dense_index = indexes
        everything = {f"d{i}" for i in range(6)}
        out = search_hybrid_excluding(
            sparse_index, dense_index, provider, "electricity", everything, config
        )
        assert out.entries == ()

    def test_matches_manual_fusion(self, indexes, provider, config):
        from citeqa import embed, search_dense

        sparse_index, dense_index = indexes
        query = "water storage for peak demand"
        fused = search_hybrid(sparse_index, dense_index, provider, query, config)
        sparse = search_sparse(
            sparse_index, query, config.pool_size, k1=config.bm25_k1, b=config.bm25_b
        )
        dense = search_dense(
            dense_index, embed(provider, query), config.pool_size, query_text=query
        )
        assert fused.to_dict() == fuse_hybrid(sparse, dense, config).to_dict()


class TestHybridConfig:
    @pytest.mark.parametrize(
        "kwargs",
        [
            {"alpha": -0.1},
            {"alpha": 1.1},
            {"pool_size": 0},
            {"final_k": 0},
            {"pool_size": 5, "final_k": 6},
            {"bm25_k1": 0.0},
            {"bm25_b": 1.5},
        ],
    )
    def test_invalid_values_rejected(self, kwargs):
        with pytest.raises(ValueError):
            HybridConfig(**kwargs)

    def test_defaults(self):
        config = HybridConfig()
        assert config.alpha == 0.65
        assert config.pool_size == 50
        assert config.final_k == 20
        assert config.bm25_k1 == 1.2
        assert config.bm25_b == 0.75
