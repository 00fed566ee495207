"""BM25 inverted index and ranked lexical lookup."""
from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from typing import AbstractSet

from ..corpus import DocumentStore, tokenize
from ..errors import RetrievalError
from .base import RetrievalResult, rank_by_score

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True)
class SparseIndex:
    """Inverted index over document text tokens.

    `postings` maps each term to (doc_id, term_frequency) pairs in ingestion
    order; `doc_lengths` holds token counts per document.
    """

    postings: dict[str, tuple[tuple[str, int], ...]]
    doc_lengths: dict[str, int]
    n_docs: int
    avg_doc_length: float

    def __post_init__(self) -> None:
        if self.n_docs < 1:
            raise ValueError("index must cover at least one document")
        if self.avg_doc_length <= 0:
            raise ValueError("average document length must be positive")

    @property
    def doc_frequencies(self) -> dict[str, int]:
        return {term: len(entries) for term, entries in self.postings.items()}

    def doc_frequency(self, term: str) -> int:
        return len(self.postings.get(term, ()))

    @property
    def vocabulary(self) -> set[str]:
        return set(self.postings)


def build_sparse_index(store: DocumentStore) -> SparseIndex:
    """Tokenize every document and build the inverted index."""
    if store.count == 0:
        raise RetrievalError("cannot build a sparse index over an empty document store")
    postings: dict[str, list[tuple[str, int]]] = {}
    doc_lengths: dict[str, int] = {}
    for doc in store:
        tokens = tokenize(doc.text)
        doc_lengths[doc.id] = len(tokens)
        for term, tf in Counter(tokens).items():
            postings.setdefault(term, []).append((doc.id, tf))
    total = sum(doc_lengths.values())
    if total == 0:
        raise RetrievalError("corpus contains no indexable tokens")
    return SparseIndex(
        postings={term: tuple(entries) for term, entries in postings.items()},
        doc_lengths=doc_lengths,
        n_docs=store.count,
        avg_doc_length=total / store.count,
    )


def bm25_idf(n_docs: int, doc_frequency: int) -> float:
    # Non-negative variant: ln((N - df + 0.5) / (df + 0.5) + 1).
    return math.log((n_docs - doc_frequency + 0.5) / (doc_frequency + 0.5) + 1.0)


def search_sparse(
    index: SparseIndex,
    query: str,
    k: int,
    *,
    k1: float = DEFAULT_K1,
    b: float = DEFAULT_B,
    excluded: AbstractSet[str] | None = None,
) -> RetrievalResult:
    """Top-k documents by Okapi BM25 score.

    Documents matching no query term are omitted rather than returned with
    score zero. Repeated query tokens contribute once per occurrence.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    scores: dict[str, float] = {}
    for term in tokenize(query):
        entries = index.postings.get(term)
        if not entries:
            continue
        idf = bm25_idf(index.n_docs, len(entries))
        for doc_id, tf in entries:
            if excluded and doc_id in excluded:
                continue
            length_norm = 1.0 - b + b * index.doc_lengths[doc_id] / index.avg_doc_length
            contribution = idf * tf * (k1 + 1.0) / (tf + k1 * length_norm)
            scores[doc_id] = scores.get(doc_id, 0.0) + contribution
    return RetrievalResult(query_text=query, entries=rank_by_score(scores, k), source="sparse")
