"""Document ingestion, tokenization, and id-addressable storage."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

from .errors import CorpusError, UnknownDocumentError

# Unicode alphanumeric runs. Underscore is a boundary, which plain \w+ would keep.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


def tokenize(text: str) -> list[str]:
    """Lowercase and split on non-alphanumeric boundaries.

    No stemming, no stopword removal; duplicates are preserved in order.
    """
    return _TOKEN_RE.findall(text.lower())


@dataclass(frozen=True)
class Document:
    id: str
    text: str
    title: str | None = None

    def __post_init__(self) -> None:
        if not self.id:
            raise CorpusError("document id must be non-empty")
        if not self.text or not self.text.strip():
            raise CorpusError(f"document {self.id!r} has empty text")


class DocumentStore:
    """Ordered, id-addressable collection of documents."""

    def __init__(self, documents: Iterable[Document] = ()):
        self._docs: list[Document] = list(documents)
        self._by_id: dict[str, Document] = {}
        for doc in self._docs:
            if doc.id in self._by_id:
                raise CorpusError(f"duplicate document id {doc.id!r}")
            self._by_id[doc.id] = doc

    def __len__(self) -> int:
        return len(self._docs)

    def __iter__(self) -> Iterator[Document]:
        return iter(self._docs)

    def __contains__(self, doc_id: str) -> bool:
        return doc_id in self._by_id

    @property
    def count(self) -> int:
        return len(self._docs)

    def ids(self) -> list[str]:
        return [doc.id for doc in self._docs]

    def get(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise UnknownDocumentError(f"unknown document id {doc_id!r}") from None


def load_corpus(path: str | Path) -> DocumentStore:
    """Load a line-delimited corpus file.

    Each non-blank line is one JSON object with fields `id` and `text` and an
    optional `title`. Lines starting with `#` are ignored. Every format
    problem is reported with its line number.
    """
    path = Path(path)
    try:
        raw = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise CorpusError(f"cannot read corpus file {path}: {exc}") from exc

    docs: list[Document] = []
    first_line: dict[str, int] = {}
    for lineno, line in enumerate(raw.splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            record = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: malformed record: {exc.msg}") from exc
        if not isinstance(record, dict):
            raise CorpusError(f"{path}:{lineno}: record must be a JSON object")
        doc_id = record.get("id")
        if not isinstance(doc_id, str) or not doc_id:
            raise CorpusError(f"{path}:{lineno}: missing or invalid `id`")
        text = record.get("text")
        if not isinstance(text, str) or not text.strip():
            raise CorpusError(f"{path}:{lineno}: missing or empty `text`")
        title = record.get("title")
        if title is not None and not isinstance(title, str):
            raise CorpusError(f"{path}:{lineno}: `title` must be a string")
        if doc_id in first_line:
            raise CorpusError(
                f"{path}:{lineno}: duplicate document id {doc_id!r} "
                f"(lines {first_line[doc_id]} and {lineno})"
            )
        first_line[doc_id] = lineno
        docs.append(Document(id=doc_id, text=text, title=title))
    return DocumentStore(docs)
