"""Sparse, dense, and hybrid retrieval over a document store."""
from .base import HybridConfig, RetrievalResult, ScoredDoc, rank_by_score
from .dense import DenseIndex, build_dense_index, search_dense
from .hybrid import fuse_hybrid, normalize_scores, search_hybrid, search_hybrid_excluding
from .persist import (
    build_manifest,
    corpus_sha256,
    load_dense_index,
    load_manifest,
    load_sparse_index,
    save_dense_index,
    save_manifest,
    save_sparse_index,
)
from .sparse import SparseIndex, bm25_idf, build_sparse_index, search_sparse

__all__ = [
    "DenseIndex",
    "HybridConfig",
    "RetrievalResult",
    "ScoredDoc",
    "SparseIndex",
    "bm25_idf",
    "build_dense_index",
    "build_manifest",
    "build_sparse_index",
    "corpus_sha256",
    "fuse_hybrid",
    "load_dense_index",
    "load_manifest",
    "load_sparse_index",
    "normalize_scores",
    "rank_by_score",
    "save_dense_index",
    "save_manifest",
    "save_sparse_index",
    "search_dense",
    "search_hybrid",
    "search_hybrid_excluding",
    "search_sparse",
]
