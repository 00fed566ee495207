"""Exhaustive cosine-similarity search over unit-normalized embeddings."""
from __future__ import annotations

from dataclasses import dataclass
from typing import AbstractSet

import numpy as np

from ..corpus import DocumentStore
from ..embedding import EmbeddingProvider, embed
from ..errors import EmbeddingError, RetrievalError
from .base import RetrievalResult, rank_by_score

_UNIT_NORM_TOLERANCE = 1e-6


@dataclass(frozen=True)
class DenseIndex:
    """Document embeddings stored row-wise; every row has unit L2 norm."""

    doc_ids: tuple[str, ...]
    matrix: np.ndarray

    def __post_init__(self) -> None:
        if self.matrix.ndim != 2:
            raise ValueError(f"matrix must be 2-dimensional, got shape {self.matrix.shape}")
        if len(self.doc_ids) != self.matrix.shape[0]:
            raise ValueError(
                f"{len(self.doc_ids)} doc ids for {self.matrix.shape[0]} vector rows"
            )
        if len(set(self.doc_ids)) != len(self.doc_ids):
            raise ValueError("doc ids must be unique")
        if len(self.doc_ids) == 0:
            raise ValueError("index must cover at least one document")
        norms = np.linalg.norm(self.matrix, axis=1)
        if not np.all(np.abs(norms - 1.0) <= _UNIT_NORM_TOLERANCE):
            worst = float(np.max(np.abs(norms - 1.0)))
            raise ValueError(f"stored vectors must have unit L2 norm (worst deviation {worst:g})")

    @property
    def dimension(self) -> int:
        return int(self.matrix.shape[1])

    def vector(self, doc_id: str) -> np.ndarray:
        try:
            row = self.doc_ids.index(doc_id)
        except ValueError:
            raise RetrievalError(f"document {doc_id!r} is not in the dense index") from None
        return self.matrix[row]


def build_dense_index(store: DocumentStore, provider: EmbeddingProvider) -> DenseIndex:
    """Embed every document text through the provider and normalize."""
    if store.count == 0:
        raise RetrievalError("cannot build a dense index over an empty document store")
    rows = [embed(provider, doc.text) for doc in store]
    return DenseIndex(doc_ids=tuple(store.ids()), matrix=np.vstack(rows))


def search_dense(
    index: DenseIndex,
    query_vector: np.ndarray,
    k: int,
    *,
    query_text: str = "",
    excluded: AbstractSet[str] | None = None,
) -> RetrievalResult:
    """Top-k documents by exact cosine similarity (exhaustive scan)."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    query = np.asarray(query_vector, dtype=np.float64)
    if query.shape != (index.dimension,):
        raise EmbeddingError(
            f"query vector has shape {query.shape}, index dimension is {index.dimension}"
        )
    norm = float(np.linalg.norm(query))
    if not np.isfinite(norm) or norm == 0.0:
        raise EmbeddingError("query vector must be non-zero and finite")
    similarities = index.matrix @ (query / norm)
    scores = {
        doc_id: float(similarity)
        for doc_id, similarity in zip(index.doc_ids, similarities)
        if not excluded or doc_id not in excluded
    }
    return RetrievalResult(query_text=query_text, entries=rank_by_score(scores, k), source="dense")
