"""Parsing, validation, and renumbering of answers that cite with [X] markers.

Grammar: a citation marker is a positive integer in square brackets; a
citation group is one or more adjacent markers optionally separated by spaces
or commas ("[1][3]", "[1], [3]"). A claim is the maximal text segment ending
at a citation group. Anything bracketed that is not a positive integer is
literal text. Parsing never fails; reconstruction from the parse is
byte-exact.
"""
from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Literal, Mapping

_MARKER_RE = re.compile(r"\[([1-9][0-9]*)\]")
_GROUP_RE = re.compile(r"\[[1-9][0-9]*\](?:[\s,]*\[[1-9][0-9]*\])*")

# Sentence punctuation that may open a segment but belongs to the previous
# sentence, e.g. the period in "A is true [1]. B holds [2]".
_EDGE_CHARS = ".,;:!? \t\r\n"


@dataclass(frozen=True)
class Claim:
    """One cited assertion.

    `text` is the human-readable segment without its markers; `char_span` is
    the [start, end) slice of the source text covering the segment including
    its citation group, so spans of consecutive claims are adjacent.
    """

    text: str
    citations: tuple[int, ...]
    char_span: tuple[int, int]

    def __post_init__(self) -> None:
        if not self.citations:
            raise ValueError("a claim must cite at least one document")
        if list(self.citations) != sorted(set(self.citations)):
            raise ValueError(f"citations must be ascending and unique, got {self.citations}")
        if any(index < 1 for index in self.citations):
            raise ValueError(f"citation indices must be positive, got {self.citations}")
        start, end = self.char_span
        if start < 0 or end < start:
            raise ValueError(f"invalid char span {self.char_span}")


@dataclass(frozen=True)
class ParsedAnswer:
    """Claims in order plus the raw uncited text after the final group."""

    claims: tuple[Claim, ...]
    trailing: str


@dataclass(frozen=True)
class AttributedAnswer:
    """Answer text with inline [X] markers and the documents they resolve to.

    `references` maps citation index to document id and always covers a
    contiguous 1..m range. Whether every cited index resolves is checked by
    `validate_citations`, not here, so malformed model output can still be
    represented and reported.
    """

    text: str
    claims: tuple[Claim, ...]
    references: dict[int, str]

    def __post_init__(self) -> None:
        if self.references:
            expected = list(range(1, len(self.references) + 1))
            if sorted(self.references) != expected:
                raise ValueError(
                    f"reference indices must be contiguous 1..{len(self.references)}, "
                    f"got {sorted(self.references)}"
                )
        previous_end = 0
        for claim in self.claims:
            if claim.char_span[0] < previous_end:
                raise ValueError("claim spans must be ordered and non-overlapping")
            previous_end = claim.char_span[1]

    def cited_indices(self) -> set[int]:
        return {index for claim in self.claims for index in claim.citations}

    def to_dict(self, titles: Mapping[str, str | None] | None = None) -> dict:
        return {
            "text": self.text,
            "claims": [
                {
                    "text": claim.text,
                    "citations": list(claim.citations),
                    "span": list(claim.char_span),
                }
                for claim in self.claims
            ],
            "references": [
                {
                    "index": index,
                    "doc_id": doc_id,
                    "title": titles.get(doc_id) if titles else None,
                }
                for index, doc_id in sorted(self.references.items())
            ],
        }


def parse_citations(answer_text: str) -> ParsedAnswer:
    """Split answer text into cited claims. Total: any string parses.

    Reconstructing `text[span] for each claim` plus `trailing` reproduces the
    input exactly.
    """
    claims: list[Claim] = []
    segment_start = 0
    for match in _GROUP_RE.finditer(answer_text):
        numbers = tuple(sorted({int(n) for n in _MARKER_RE.findall(match.group(0))}))
        segment = answer_text[segment_start : match.start()]
        text = segment.strip().lstrip(_EDGE_CHARS)
        claims.append(Claim(text=text, citations=numbers, char_span=(segment_start, match.end())))
        segment_start = match.end()
    return ParsedAnswer(claims=tuple(claims), trailing=answer_text[segment_start:])


@dataclass(frozen=True)
class Violation:
    kind: Literal["out_of_range", "unused_reference", "unattributed_text"]
    detail: str


def validate_citations(answer: AttributedAnswer, doc_count: int) -> list[Violation]:
    """Report citation problems without repairing anything."""
    if doc_count < 1:
        raise ValueError(f"doc_count must be >= 1, got {doc_count}")
    violations: list[Violation] = []
    cited: set[int] = set()
    for claim in answer.claims:
        for index in claim.citations:
            cited.add(index)
            if index > doc_count:
                violations.append(
                    Violation(
                        "out_of_range",
                        f"citation [{index}] exceeds the document count {doc_count}",
                    )
                )
    for index in sorted(answer.references):
        if index not in cited:
            violations.append(
                Violation(
                    "unused_reference",
                    f"reference [{index}] ({answer.references[index]}) is never cited",
                )
            )
    trailing = parse_citations(answer.text).trailing.strip(_EDGE_CHARS)
    if trailing:
        violations.append(
            Violation("unattributed_text", f"uncited trailing text: {trailing[:60]!r}")
        )
    return violations


def _rewrite_markers(text: str, mapping: Mapping[int, int]) -> str:
    """Rewrite mapped markers; unmapped ones stay verbatim as literal text."""

    def replace(match: re.Match) -> str:
        old = int(match.group(1))
        return f"[{mapping[old]}]" if old in mapping else match.group(0)

    return _MARKER_RE.sub(replace, text)


def renumber_citations(original: AttributedAnswer, additional: AttributedAnswer) -> AttributedAnswer:
    """Merge a follow-up answer into an existing one with stable numbering.

    Original indices 1..m are preserved. The follow-up's indices are remapped
    to m+1.. in order of first use in its text; a follow-up reference whose
    document already appears in the original reuses the existing index.
    Follow-up references that are never cited are appended afterwards so the
    merged table stays contiguous and complete.
    """
    if not additional.text.strip() and not additional.claims and not additional.references:
        return original

    index_by_doc = {doc_id: index for index, doc_id in original.references.items()}
    merged_references = dict(original.references)
    mapping: dict[int, int] = {}
    next_index = len(original.references) + 1

    def assign(old_index: int) -> None:
        nonlocal next_index
        if old_index in mapping:
            return
        doc_id = additional.references.get(old_index)
        if doc_id is None:
            raise ValueError(f"follow-up answer cites [{old_index}] but has no reference for it")
        existing = index_by_doc.get(doc_id)
        if existing is not None:
            mapping[old_index] = existing
            return
        mapping[old_index] = next_index
        merged_references[next_index] = doc_id
        index_by_doc[doc_id] = next_index
        next_index += 1

    for claim in additional.claims:
        for old_index in claim.citations:
            assign(old_index)
    for old_index in sorted(additional.references):
        assign(old_index)

    remapped_text = _rewrite_markers(additional.text, mapping)
    separator = "\n" if original.text and remapped_text else ""
    merged_text = original.text + separator + remapped_text

    # Re-derive the follow-up claims from the rewritten text because marker
    # widths may change. Markers beyond the merged table (kept verbatim above)
    # must not come back as claims.
    offset = len(original.text) + len(separator)
    remapped_claims: list[Claim] = []
    for claim in parse_citations(remapped_text).claims:
        kept = tuple(index for index in claim.citations if index <= len(merged_references))
        if not kept:
            continue
        remapped_claims.append(
            Claim(
                text=claim.text,
                citations=kept,
                char_span=(claim.char_span[0] + offset, claim.char_span[1] + offset),
            )
        )
    return AttributedAnswer(
        text=merged_text,
        claims=original.claims + tuple(remapped_claims),
        references=merged_references,
    )
