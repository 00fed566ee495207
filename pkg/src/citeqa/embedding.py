"""Embedding providers: a deterministic local one and a remote HTTP service."""
from __future__ import annotations

import hashlib
from typing import Protocol, Sequence, runtime_checkable

import httpx
import numpy as np

from .corpus import tokenize
from .errors import EmbeddingError


@runtime_checkable
class EmbeddingProvider(Protocol):
    """Anything that turns a batch of texts into real vectors of a fixed dimension."""

    dimension: int

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]: ...


class LocalHashEmbedding:
    """Deterministic, vocabulary-free embeddings for tests and offline runs.

    Every character trigram of every token (padded with `#`) maps to a
    hash-seeded pseudo-random unit vector; a text embeds as the sum of its
    trigram vectors. Texts sharing subword structure land close together,
    which stands in for semantic similarity without a model server.
    """

    def __init__(self, dimension: int = 256):
        if dimension < 2:
            raise ValueError(f"dimension must be >= 2, got {dimension}")
        self.dimension = dimension
        self._trigram_cache: dict[str, np.ndarray] = {}

    def _trigram_vector(self, gram: str) -> np.ndarray:
        vec = self._trigram_cache.get(gram)
        if vec is None:
            seed = int.from_bytes(hashlib.sha256(gram.encode("utf-8")).digest()[:8], "big")
            vec = np.random.default_rng(seed).standard_normal(self.dimension)
            vec /= np.linalg.norm(vec)
            self._trigram_cache[gram] = vec
        return vec

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for text in texts:
            acc = np.zeros(self.dimension)
            grams = 0
            for token in tokenize(text):
                padded = f"#{token}#"
                for i in range(len(padded) - 2):
                    acc += self._trigram_vector(padded[i : i + 3])
                    grams += 1
            if grams == 0:
                raise EmbeddingError(f"text has no alphanumeric content to embed: {text[:40]!r}")
            out.append(acc)
        return out


class HttpEmbeddingProvider:
    """Client for an embedding endpoint.

    Wire format: POST `{"texts": [...]}` to the configured URL, expect
    `{"vectors": [[...], ...], "dimension": d}` back. The declared dimension
    must match the response.
    """

    def __init__(self, url: str, dimension: int, *, token: str | None = None, timeout: float = 30.0):
        if not url:
            raise ValueError("url must be non-empty")
        if dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {dimension}")
        self.url = url
        self.dimension = dimension
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._timeout = timeout

    def embed_batch(self, texts: Sequence[str]) -> list[np.ndarray]:
        try:
            response = httpx.post(
                self.url, json={"texts": list(texts)}, headers=self._headers, timeout=self._timeout
            )
        except httpx.HTTPError as exc:
            raise EmbeddingError(f"embedding provider unreachable: {exc}") from exc
        if response.status_code != 200:
            raise EmbeddingError(f"embedding provider returned HTTP {response.status_code}")
        try:
            body = response.json()
            vectors = body["vectors"]
            dimension = int(body["dimension"])
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbeddingError(f"embedding provider returned a malformed body: {exc}") from exc
        if dimension != self.dimension:
            raise EmbeddingError(
                f"embedding provider dimension {dimension} does not match configured {self.dimension}"
            )
        if len(vectors) != len(texts):
            raise EmbeddingError(
                f"embedding provider returned {len(vectors)} vectors for {len(texts)} texts"
            )
        return [np.asarray(vec, dtype=np.float64) for vec in vectors]


def embed(provider: EmbeddingProvider, text: str) -> np.ndarray:
    """Embed one text and L2-normalize the result.

    Empty text is a caller error; provider failures, dimension mismatches,
    and degenerate (zero or non-finite) vectors raise `EmbeddingError`.
    """
    if not text or not text.strip():
        raise ValueError("text to embed must be non-empty")
    vectors = provider.embed_batch([text])
    if len(vectors) != 1:
        raise EmbeddingError(f"provider returned {len(vectors)} vectors for one text")
    vec = np.asarray(vectors[0], dtype=np.float64)
    if vec.ndim != 1 or vec.shape[0] != provider.dimension:
        raise EmbeddingError(
            f"provider returned shape {vec.shape}, expected ({provider.dimension},)"
        )
    norm = float(np.linalg.norm(vec))
    if not np.isfinite(norm) or norm == 0.0:
        raise EmbeddingError("provider returned a zero or non-finite vector")
    return vec / norm
