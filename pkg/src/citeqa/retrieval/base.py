"""Result types and ranking rules shared by all retrievers."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Literal, Mapping

Source = Literal["sparse", "dense", "hybrid"]


@dataclass(frozen=True)
class ScoredDoc:
    doc_id: str
    score: float
    rank: int


@dataclass(frozen=True)
class RetrievalResult:
    """A ranked list of documents for one query.

    Ranks run 1..n, scores are non-increasing, and score ties are broken by
    ascending doc id. Constructing a result that violates this raises.
    """

    query_text: str
    entries: tuple[ScoredDoc, ...]
    source: Source

    def __post_init__(self) -> None:
        seen: set[str] = set()
        previous: ScoredDoc | None = None
        for position, entry in enumerate(self.entries, start=1):
            if entry.rank != position:
                raise ValueError(f"entry {entry.doc_id!r} has rank {entry.rank}, expected {position}")
            if entry.doc_id in seen:
                raise ValueError(f"duplicate doc id {entry.doc_id!r} in result")
            seen.add(entry.doc_id)
            if previous is not None:
                if entry.score > previous.score:
                    raise ValueError("scores must be non-increasing")
                if entry.score == previous.score and entry.doc_id < previous.doc_id:
                    raise ValueError("tied scores must be ordered by ascending doc id")
            previous = entry

    def __len__(self) -> int:
        return len(self.entries)

    def __iter__(self) -> Iterator[ScoredDoc]:
        return iter(self.entries)

    def doc_ids(self) -> list[str]:
        return [entry.doc_id for entry in self.entries]

    def to_dict(self) -> dict:
        return {
            "query": self.query_text,
            "source": self.source,
            "entries": [
                {"doc_id": e.doc_id, "score": e.score, "rank": e.rank} for e in self.entries
            ],
        }


def rank_by_score(scores: Mapping[str, float], k: int) -> tuple[ScoredDoc, ...]:
    """Top-k entries by descending score; ties broken by ascending doc id."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    ordered = sorted(scores.items(), key=lambda item: (-item[1], item[0]))[:k]
    return tuple(
        ScoredDoc(doc_id=doc_id, score=score, rank=rank)
        for rank, (doc_id, score) in enumerate(ordered, start=1)
    )


@dataclass(frozen=True)
class HybridConfig:
    """Knobs for hybrid retrieval.

    `alpha` weights the normalized sparse score; `1 - alpha` weights the
    normalized dense score. Each retriever contributes a candidate pool of
    `pool_size` documents and the fused ranking is cut at `final_k`.
    """

    alpha: float = 0.65
    pool_size: int = 50
    final_k: int = 20
    bm25_k1: float = 1.2
    bm25_b: float = 0.75

    def __post_init__(self) -> None:
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must be in [0, 1], got {self.alpha}")
        if self.pool_size < 1:
            raise ValueError(f"pool_size must be >= 1, got {self.pool_size}")
        if not 1 <= self.final_k <= self.pool_size:
            raise ValueError(
                f"final_k must be in [1, pool_size={self.pool_size}], got {self.final_k}"
            )
        if self.bm25_k1 <= 0:
            raise ValueError(f"bm25_k1 must be positive, got {self.bm25_k1}")
        if not 0.0 <= self.bm25_b <= 1.0:
            raise ValueError(f"bm25_b must be in [0, 1], got {self.bm25_b}")
