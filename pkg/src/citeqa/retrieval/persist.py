"""Versioned on-disk formats for the indexes and the build manifest.

A round-trip through save/load reproduces bit-identical query results: the
sparse file stores the exact average document length and posting order, and
the dense file stores raw float64 vectors.
"""
from __future__ import annotations

import hashlib
import json
import os
from pathlib import Path

import numpy as np

from ..errors import IndexIOError
from .dense import DenseIndex
from .sparse import SparseIndex

SPARSE_FORMAT = "citeqa-sparse"
DENSE_FORMAT = "citeqa-dense"
MANIFEST_FORMAT = "citeqa-manifest"
FORMAT_VERSION = 1


def atomic_write_text(path: Path, content: str) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(content, encoding="utf-8")
    os.replace(tmp, path)


def save_sparse_index(index: SparseIndex, path: str | Path) -> None:
    path = Path(path)
    payload = {
        "format": SPARSE_FORMAT,
        "version": FORMAT_VERSION,
        "n_docs": index.n_docs,
        "avg_doc_length": index.avg_doc_length,
        # Lists keep ingestion order, which fixes the score summation order.
        "doc_lengths": [[doc_id, length] for doc_id, length in index.doc_lengths.items()],
        "postings": {
            term: [[doc_id, tf] for doc_id, tf in entries]
            for term, entries in index.postings.items()
        },
    }
    atomic_write_text(path, json.dumps(payload, sort_keys=True))


def load_sparse_index(path: str | Path) -> SparseIndex:
    path = Path(path)
    try:
        payload = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IndexIOError(f"cannot read sparse index {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IndexIOError(f"sparse index {path} is corrupt: {exc.msg}") from exc
    if payload.get("format") != SPARSE_FORMAT:
        raise IndexIOError(f"{path} is not a sparse index file")
    if payload.get("version") != FORMAT_VERSION:
        raise IndexIOError(
            f"sparse index {path} has version {payload.get('version')}, expected {FORMAT_VERSION}"
        )
    try:
        return SparseIndex(
            postings={
                term: tuple((doc_id, int(tf)) for doc_id, tf in entries)
                for term, entries in payload["postings"].items()
            },
            doc_lengths={doc_id: int(length) for doc_id, length in payload["doc_lengths"]},
            n_docs=int(payload["n_docs"]),
            avg_doc_length=float(payload["avg_doc_length"]),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise IndexIOError(f"sparse index {path} has malformed content: {exc}") from exc


def save_dense_index(index: DenseIndex, path: str | Path) -> None:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    with open(tmp, "wb") as handle:
        np.savez(
            handle,
            format=np.array(DENSE_FORMAT),
            version=np.array(FORMAT_VERSION),
            doc_ids=np.array(index.doc_ids),
            vectors=index.matrix,
        )
    os.replace(tmp, path)


def load_dense_index(path: str | Path) -> DenseIndex:
    path = Path(path)
    try:
        with np.load(path, allow_pickle=False) as data:
            if str(data["format"]) != DENSE_FORMAT:
                raise IndexIOError(f"{path} is not a dense index file")
            if int(data["version"]) != FORMAT_VERSION:
                raise IndexIOError(
                    f"dense index {path} has version {int(data['version'])}, expected {FORMAT_VERSION}"
                )
            doc_ids = tuple(str(doc_id) for doc_id in data["doc_ids"])
            matrix = np.array(data["vectors"], dtype=np.float64)
    except OSError as exc:
        raise IndexIOError(f"cannot read dense index {path}: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise IndexIOError(f"dense index {path} is corrupt: {exc}") from exc
    try:
        return DenseIndex(doc_ids=doc_ids, matrix=matrix)
    except ValueError as exc:
        raise IndexIOError(f"dense index {path} has malformed content: {exc}") from exc


def corpus_sha256(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise IndexIOError(f"cannot hash corpus file {path}: {exc}") from exc


def build_manifest(
    *,
    corpus_hash: str,
    doc_count: int,
    embedding_kind: str,
    dimension: int,
    bm25_k1: float,
    bm25_b: float,
) -> dict:
    """Index build parameters, recorded for reproducibility checks.

    Contains no timestamps so an unchanged rebuild produces identical bytes.
    """
    return {
        "format": MANIFEST_FORMAT,
        "version": FORMAT_VERSION,
        "corpus_sha256": corpus_hash,
        "doc_count": doc_count,
        "embedding": {"kind": embedding_kind, "dimension": dimension},
        "bm25": {"k1": bm25_k1, "b": bm25_b},
    }


def save_manifest(manifest: dict, path: str | Path) -> None:
    atomic_write_text(Path(path), json.dumps(manifest, sort_keys=True, indent=2) + "\n")


def load_manifest(path: str | Path) -> dict:
    path = Path(path)
    try:
        manifest = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise IndexIOError(f"cannot read index manifest {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise IndexIOError(f"index manifest {path} is corrupt: {exc.msg}") from exc
    if manifest.get("format") != MANIFEST_FORMAT:
        raise IndexIOError(f"{path} is not an index manifest")
    return manifest
