"""Linear fusion of normalized sparse and dense rankings, with exclusion support."""
from __future__ import annotations

from typing import AbstractSet, Iterable, Sequence

from ..embedding import EmbeddingProvider, embed
from .base import HybridConfig, RetrievalResult, ScoredDoc, rank_by_score
from .dense import DenseIndex, search_dense
from .sparse import SparseIndex, search_sparse


def normalize_scores(entries: Sequence[ScoredDoc]) -> list[ScoredDoc]:
    """Min-max scale scores into [0, 1], preserving order and ranks.

    All-equal scores map to 1.0 rather than dividing by zero; an empty input
    stays empty.
    """
    if not entries:
        return []
    values = [entry.score for entry in entries]
    low, high = min(values), max(values)
    if high == low:
        return [ScoredDoc(e.doc_id, 1.0, e.rank) for e in entries]
    span = high - low
    return [ScoredDoc(e.doc_id, (e.score - low) / span, e.rank) for e in entries]


def fuse_hybrid(
    sparse: RetrievalResult, dense: RetrievalResult, config: HybridConfig | None = None
) -> RetrievalResult:
    """Fuse one sparse and one dense ranking for the same query.

    Each side is min-max normalized over its own candidates; a document absent
    from one side contributes 0 on that side. The fused score is
    `alpha * sparse_norm + (1 - alpha) * dense_norm`, cut at `final_k`.
    """
    config = config or HybridConfig()
    if sparse.query_text != dense.query_text:
        raise ValueError(
            f"cannot fuse results for different queries: "
            f"{sparse.query_text!r} vs {dense.query_text!r}"
        )
    if len(sparse.entries) > config.pool_size:
        raise ValueError(f"sparse pool has {len(sparse.entries)} entries, limit {config.pool_size}")
    if len(dense.entries) > config.pool_size:
        raise ValueError(f"dense pool has {len(dense.entries)} entries, limit {config.pool_size}")
    sparse_norm = {entry.doc_id: entry.score for entry in normalize_scores(sparse.entries)}
    dense_norm = {entry.doc_id: entry.score for entry in normalize_scores(dense.entries)}
    alpha = config.alpha
    fused = {
        doc_id: alpha * sparse_norm.get(doc_id, 0.0) + (1.0 - alpha) * dense_norm.get(doc_id, 0.0)
        for doc_id in set(sparse_norm) | set(dense_norm)
    }
    return RetrievalResult(
        query_text=sparse.query_text,
        entries=rank_by_score(fused, config.final_k),
        source="hybrid",
    )


def search_hybrid_excluding(
    sparse_index: SparseIndex,
    dense_index: DenseIndex,
    provider: EmbeddingProvider,
    query: str,
    excluded: Iterable[str],
    config: HybridConfig | None = None,
) -> RetrievalResult:
    """Hybrid search that never returns documents from `excluded`.

    Exclusion is applied to each retriever's candidate pool before
    normalization and fusion, so surviving documents keep full-strength
    normalized scores. Excluding everything yields an empty result.
    """
    config = config or HybridConfig()
    excluded_set: AbstractSet[str] = frozenset(excluded)
    sparse = search_sparse(
        sparse_index,
        query,
        config.pool_size,
        k1=config.bm25_k1,
        b=config.bm25_b,
        excluded=excluded_set,
    )
    query_vector = embed(provider, query)
    dense = search_dense(
        dense_index,
        query_vector,
        config.pool_size,
        query_text=query,
        excluded=excluded_set,
    )
    return fuse_hybrid(sparse, dense, config)


def search_hybrid(
    sparse_index: SparseIndex,
    dense_index: DenseIndex,
    provider: EmbeddingProvider,
    query: str,
    config: HybridConfig | None = None,
) -> RetrievalResult:
    """Hybrid search over the full corpus."""
    return search_hybrid_excluding(sparse_index, dense_index, provider, query, (), config)
