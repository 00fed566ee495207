"""The four-agent answering pipeline.

Stage order for one query: hybrid retrieval, per-document answer drafts
(agent 1), per-document relevance judgments from first-token
log-probabilities (agent 2), dynamic threshold filtering, cited answer
generation over the retained documents (agent 3), and completeness analysis
with optional revision rounds that retrieve fresh documents for unanswered
question components (agent 4).
"""
from __future__ import annotations

import json
import math
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Sequence

from .attribution import AttributedAnswer, Claim, parse_citations, renumber_citations
from .corpus import Document, DocumentStore
from .embedding import EmbeddingProvider
from .errors import AgentError, BackendError, CapabilityError, CiteQAError, PipelineError
from .llm import Backend, ChatRequest
from .prompts import REPROMPT_PREFIX, PromptLibrary
from .retrieval import (
    DenseIndex,
    HybridConfig,
    RetrievalResult,
    SparseIndex,
    rank_by_score,
    search_hybrid,
    search_hybrid_excluding,
)

# Fixed marker an agent-1 draft uses when its document cannot answer.
NO_ANSWER = "NO_ANSWER"

FULLY_ANSWERED = "fully_answered"
PARTIALLY_ANSWERED = "partially_answered"
NOT_ANSWERED = "not_answered"
_STATUSES = (FULLY_ANSWERED, PARTIALLY_ANSWERED, NOT_ANSWERED)

_YES = "Yes"
_NO = "No"


# ---------------------------------------------------------------------------
# Domain types


@dataclass(frozen=True)
class Triplet:
    """One document's draft answer for the query."""

    doc_id: str
    query_text: str
    answer_text: str

    def __post_init__(self) -> None:
        if not self.doc_id:
            raise ValueError("doc_id must be non-empty")
        if not self.query_text:
            raise ValueError("query_text must be non-empty")
        if not self.answer_text:
            raise ValueError(f"answer_text must be non-empty or the {NO_ANSWER} marker")


@dataclass(frozen=True)
class RelevanceJudgment:
    """Support score for one document: log p(Yes) minus log p(No)."""

    doc_id: str
    log_p_yes: float
    log_p_no: float
    score: float
    floored: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.score != self.log_p_yes - self.log_p_no:
            raise ValueError("score must equal log_p_yes - log_p_no exactly")


@dataclass(frozen=True)
class FilterDecision:
    """Outcome of thresholding judgment scores at mean minus n times sigma."""

    tau_q: float
    sigma: float
    n: float
    adjusted_tau: float
    retained: tuple[str, ...]
    filtered: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "tau_q": self.tau_q,
            "sigma": self.sigma,
            "n": self.n,
            "adjusted_tau": self.adjusted_tau,
            "retained": list(self.retained),
            "filtered": list(self.filtered),
        }


@dataclass(frozen=True)
class QuestionComponent:
    """One sub-question of the query and how well the answer covers it."""

    component_text: str
    status: str
    supporting_claim_indices: tuple[int, ...] = ()
    followup_question: str | None = None

    def __post_init__(self) -> None:
        if not self.component_text:
            raise ValueError("component_text must be non-empty")
        if self.status not in _STATUSES:
            raise ValueError(f"status must be one of {_STATUSES}, got {self.status!r}")
        if self.status == FULLY_ANSWERED and self.followup_question is not None:
            raise ValueError("a fully answered component must not carry a follow-up question")
        if self.status != FULLY_ANSWERED and not self.followup_question:
            raise ValueError("an unanswered component must carry a follow-up question")

    def to_dict(self) -> dict:
        return {
            "component": self.component_text,
            "status": self.status,
            "supporting_claims": list(self.supporting_claim_indices),
            "followup_question": self.followup_question,
        }


@dataclass(frozen=True)
class CompletenessReport:
    components: tuple[QuestionComponent, ...]
    degraded: bool = False

    def __post_init__(self) -> None:
        if not self.components:
            raise ValueError("a completeness report needs at least one component")

    @property
    def needs_revision(self) -> bool:
        return any(component.status != FULLY_ANSWERED for component in self.components)

    def to_dict(self) -> dict:
        return {
            "needs_revision": self.needs_revision,
            "degraded": self.degraded,
            "components": [component.to_dict() for component in self.components],
        }


@dataclass(frozen=True)
class TraceEvent:
    """One step record in the pipeline trace. Content is JSON-serializable."""

    step: str
    data: dict

    def to_dict(self) -> dict:
        return {"step": self.step, "data": self.data}


@dataclass(frozen=True)
class PipelineOutput:
    final_answer: AttributedAnswer
    first_stage: RetrievalResult
    filter_decision: FilterDecision
    completeness: CompletenessReport
    second_stage: RetrievalResult | None
    trace: tuple[TraceEvent, ...]

    def to_dict(self) -> dict:
        return {
            "final_answer": self.final_answer.to_dict(),
            "first_stage": self.first_stage.to_dict(),
            "filter": self.filter_decision.to_dict(),
            "completeness": self.completeness.to_dict(),
            "second_stage": self.second_stage.to_dict() if self.second_stage else None,
            "trace": [event.to_dict() for event in self.trace],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


@dataclass(frozen=True)
class RevisionOutcome:
    answer: AttributedAnswer
    second_stage: RetrievalResult | None
    events: tuple[TraceEvent, ...]


@dataclass(frozen=True)
class PipelineConfig:
    retrieval: HybridConfig = HybridConfig()
    n_filter: float = 0.5
    max_revision_rounds: int = 1
    parallelism: int = 1

    def __post_init__(self) -> None:
        if self.n_filter < 0:
            raise ValueError(f"n_filter must be >= 0, got {self.n_filter}")
        if self.max_revision_rounds < 0:
            raise ValueError(f"max_revision_rounds must be >= 0, got {self.max_revision_rounds}")
        if self.parallelism < 1:
            raise ValueError(f"parallelism must be >= 1, got {self.parallelism}")


# ---------------------------------------------------------------------------
# Prompt assembly helpers


def _format_document(doc: Document) -> str:
    return f"{doc.title}: {doc.text}" if doc.title else doc.text


def format_numbered_documents(indexed_docs: Sequence[tuple[int, Document]]) -> str:
    return "\n".join(f"[{index}] {_format_document(doc)}" for index, doc in indexed_docs)


def _format_claims(claims: Sequence[Claim]) -> str:
    if not claims:
        return "(none)"
    return "\n".join(
        f"{number}. {claim.text} [cites: {', '.join(map(str, claim.citations))}]"
        for number, claim in enumerate(claims, start=1)
    )


def _keep_in_range(claims: Iterable[Claim], doc_count: int) -> tuple[Claim, ...]:
    """Drop citation indices beyond doc_count; a claim losing all of them dissolves."""
    kept: list[Claim] = []
    for claim in claims:
        valid = tuple(index for index in claim.citations if index <= doc_count)
        if not valid:
            continue
        kept.append(claim if valid == claim.citations else Claim(claim.text, valid, claim.char_span))
    return tuple(kept)


def _chat_reparse(backend: Backend, request: ChatRequest, parse):
    """One chat call plus a single reprompt when `parse` rejects the reply.

    Returns (raw_text, parsed) on success and (raw_text, None) when the
    reprompt also failed to parse.
    """
    raw = backend.chat(request).text
    parsed = parse(raw)
    if parsed is not None:
        return raw, parsed
    retry = ChatRequest(
        system_prompt=request.system_prompt,
        user_prompt=REPROMPT_PREFIX + request.user_prompt,
        max_tokens=request.max_tokens,
        temperature=request.temperature,
        tag=request.tag,
    )
    raw = backend.chat(retry).text
    return raw, parse(raw)


# ---------------------------------------------------------------------------
# Agents


def agent1_predict(backend: Backend, prompts: PromptLibrary, query: str, doc: Document) -> Triplet:
    """Draft an answer from a single document, or the NO_ANSWER marker."""
    if not query or not query.strip():
        raise ValueError("query must be non-empty")
    system, user = prompts.render("agent1_predict", query=query, document=_format_document(doc))
    request = ChatRequest(system, user, tag=f"agent1:{doc.id}")
    try:
        response = backend.chat(request)
    except BackendError as exc:
        raise AgentError(
            f"per-document answer failed for {doc.id!r}: {exc}", doc_id=doc.id
        ) from exc
    answer = response.text.strip()
    return Triplet(doc_id=doc.id, query_text=query, answer_text=answer or NO_ANSWER)


def agent2_judge(
    backend: Backend, prompts: PromptLibrary, triplet: Triplet, doc: Document
) -> RelevanceJudgment:
    """Score one document's support from first-token Yes/No log-probabilities."""
    if triplet.doc_id != doc.id:
        raise ValueError(f"triplet is for {triplet.doc_id!r} but document is {doc.id!r}")
    system, user = prompts.render(
        "agent2_judge",
        query=triplet.query_text,
        document=_format_document(doc),
        answer=triplet.answer_text,
    )
    request = ChatRequest(system, user, max_tokens=1, tag=f"agent2:{triplet.doc_id}")
    try:
        result = backend.first_token_logprobs(request, [_YES, _NO])
    except CapabilityError:
        raise
    except BackendError as exc:
        raise AgentError(
            f"relevance judgment failed for {triplet.doc_id!r}: {exc}", doc_id=triplet.doc_id
        ) from exc
    log_yes = result.logprobs[_YES]
    log_no = result.logprobs[_NO]
    return RelevanceJudgment(
        doc_id=triplet.doc_id,
        log_p_yes=log_yes,
        log_p_no=log_no,
        score=log_yes - log_no,
        floored=tuple(sorted(result.floored)),
    )


def filter_documents(judgments: Sequence[RelevanceJudgment], n: float = 0.5) -> FilterDecision:
    """Retain documents scoring at least mean minus n times population sigma.

    Retained and filtered lists are ordered by descending score, ties by
    ascending doc id. The maximum always meets the threshold, so retained is
    never empty.
    """
    if not judgments:
        raise ValueError("judgments must be non-empty")
    if n < 0:
        raise ValueError(f"n must be >= 0, got {n}")
    scores = [judgment.score for judgment in judgments]
    if min(scores) == max(scores):
        # Exact arithmetic for the degenerate case: a rounded mean could
        # otherwise drift above the shared score and retain nothing.
        tau = scores[0]
        sigma = 0.0
    else:
        tau = sum(scores) / len(scores)
        sigma = math.sqrt(sum((score - tau) ** 2 for score in scores) / len(scores))
    adjusted = tau - n * sigma
    ordered = sorted(judgments, key=lambda judgment: (-judgment.score, judgment.doc_id))
    retained = tuple(j.doc_id for j in ordered if j.score >= adjusted)
    filtered = tuple(j.doc_id for j in ordered if j.score < adjusted)
    assert retained, "the maximum score must meet the adjusted threshold"
    return FilterDecision(
        tau_q=tau, sigma=sigma, n=n, adjusted_tau=adjusted, retained=retained, filtered=filtered
    )


def agent3_generate(
    backend: Backend, prompts: PromptLibrary, query: str, retained_docs: Sequence[Document]
) -> AttributedAnswer:
    """Generate one answer citing the retained documents as [1]..[m].

    Citations pointing beyond the document list are dropped; a reply without
    any parseable citation is retried once and then raised as an error
    carrying the raw text.
    """
    if not retained_docs:
        raise ValueError("retained_docs must be non-empty")
    numbered = format_numbered_documents(list(enumerate(retained_docs, start=1)))
    system, user = prompts.render("agent3_generate", query=query, numbered_documents=numbered)
    request = ChatRequest(system, user, tag="agent3")

    def parse(raw: str):
        parsed = parse_citations(raw)
        return parsed if parsed.claims else None

    try:
        raw, parsed = _chat_reparse(backend, request, parse)
    except BackendError as exc:
        raise AgentError(f"cited answer generation failed: {exc}") from exc
    if parsed is None:
        raise AgentError(
            "cited answer contained no parseable citations after a reprompt", raw_text=raw
        )
    claims = _keep_in_range(parsed.claims, len(retained_docs))
    references = {index: doc.id for index, doc in enumerate(retained_docs, start=1)}
    return AttributedAnswer(text=raw, claims=claims, references=references)


# --- agent 4: completeness analysis ---

_ANALYSIS_FIELD_RE = re.compile(r"^(COMPONENT|STATUS|CLAIMS|FOLLOWUP):\s*(.*)$")


def _parse_claim_indices(raw: str, claim_count: int) -> tuple[int, ...]:
    cleaned = raw.strip().lower()
    if cleaned in ("", "none", "n/a", "-"):
        return ()
    indices: set[int] = set()
    for piece in re.split(r"[,\s]+", cleaned):
        if not piece:
            continue
        if not piece.isdigit():
            raise ValueError(f"claim index {piece!r} is not a number")
        value = int(piece)
        if 1 <= value <= claim_count:
            indices.add(value)
    return tuple(sorted(indices))


def _parse_analysis(reply: str, claim_count: int) -> tuple[QuestionComponent, ...]:
    blocks: list[dict] = []
    current: dict | None = None
    for line in reply.splitlines():
        match = _ANALYSIS_FIELD_RE.match(line.strip())
        if not match:
            continue
        key, value = match.group(1), match.group(2).strip()
        if key == "COMPONENT":
            current = {"component": value}
            blocks.append(current)
        elif current is None:
            raise ValueError(f"{key} line before any COMPONENT line")
        elif key == "STATUS":
            current["status"] = value
        elif key == "CLAIMS":
            current["claims"] = value
        else:
            current["followup"] = value
    if not blocks:
        raise ValueError("no COMPONENT blocks found")
    components: list[QuestionComponent] = []
    for block in blocks:
        text = block.get("component", "").strip()
        if not text:
            raise ValueError("empty COMPONENT text")
        raw_status = block.get("status")
        if raw_status is None:
            raise ValueError(f"component {text!r} is missing a STATUS line")
        status = raw_status.strip().lower().replace(" ", "_").replace("-", "_")
        if status not in _STATUSES:
            raise ValueError(f"unknown status {raw_status!r}")
        followup = (block.get("followup") or "").strip() or None
        if status == FULLY_ANSWERED:
            followup = None
        elif followup is None:
            followup = text  # the unanswered component doubles as its own follow-up
        components.append(
            QuestionComponent(
                component_text=text,
                status=status,
                supporting_claim_indices=_parse_claim_indices(block.get("claims", ""), claim_count),
                followup_question=followup,
            )
        )
    return tuple(components)


def _degraded_report(query: str, answer: AttributedAnswer) -> CompletenessReport:
    if answer.claims:
        component = QuestionComponent(
            component_text=query,
            status=FULLY_ANSWERED,
            supporting_claim_indices=tuple(range(1, len(answer.claims) + 1)),
        )
    else:
        component = QuestionComponent(
            component_text=query, status=NOT_ANSWERED, followup_question=query
        )
    return CompletenessReport(components=(component,), degraded=True)


def agent4_analyze(
    backend: Backend, prompts: PromptLibrary, query: str, answer: AttributedAnswer
) -> CompletenessReport:
    """Decompose the query into components and grade the answer's coverage.

    An unparseable reply is retried once; a second failure degrades to a
    single whole-query component instead of aborting the pipeline.
    """
    system, user = prompts.render(
        "agent4_analyze", query=query, answer=answer.text, claims=_format_claims(answer.claims)
    )
    request = ChatRequest(system, user, tag="agent4:analyze")

    def parse(raw: str):
        try:
            return _parse_analysis(raw, len(answer.claims))
        except ValueError:
            return None

    try:
        _, components = _chat_reparse(backend, request, parse)
    except BackendError as exc:
        raise AgentError(f"completeness analysis failed: {exc}") from exc
    if components is None:
        return _degraded_report(query, answer)
    return CompletenessReport(components=components)


def agent4_revise(
    backend: Backend,
    prompts: PromptLibrary,
    store: DocumentStore,
    sparse_index: SparseIndex,
    dense_index: DenseIndex,
    provider: EmbeddingProvider,
    query: str,
    answer: AttributedAnswer,
    report: CompletenessReport,
    retrieval_config: HybridConfig,
    excluded_ids: Iterable[str],
) -> RevisionOutcome:
    """Fill coverage gaps with second-stage retrieval and answer synthesis.

    Every unanswered component triggers a hybrid search for its follow-up
    question that excludes all previously retrieved documents, then a cited
    follow-up answer over the fresh documents. Follow-up citations are
    renumbered onto the original reference table and a synthesis prompt merges
    everything into one answer. Components whose retrieval comes back empty
    are noted as unresolved and the original text stands for them.
    """
    if not report.needs_revision:
        raise ValueError("revision requires a report with at least one unanswered component")
    events: list[TraceEvent] = []
    excluded = set(excluded_ids)
    merged = answer
    followups: list[tuple[str, str]] = []
    gap_results: list[RetrievalResult] = []

    for component in report.components:
        if component.status == FULLY_ANSWERED:
            continue
        question = component.followup_question
        result = search_hybrid_excluding(
            sparse_index, dense_index, provider, question, excluded, retrieval_config
        )
        if not result.entries:
            events.append(
                TraceEvent(
                    "agent4_followup",
                    {
                        "component": component.component_text,
                        "question": question,
                        "resolved": False,
                        "note": "second-stage retrieval returned no documents",
                    },
                )
            )
            continue
        excluded.update(result.doc_ids())
        gap_results.append(result)
        docs = [store.get(entry.doc_id) for entry in result.entries]
        numbered = format_numbered_documents(list(enumerate(docs, start=1)))
        system, user = prompts.render(
            "agent4_followup", question=question, numbered_documents=numbered
        )
        request = ChatRequest(system, user, tag=f"agent4:followup:{len(gap_results)}")

        def parse(raw: str):
            parsed = parse_citations(raw)
            claims = _keep_in_range(parsed.claims, len(docs))
            return claims or None

        try:
            raw, claims = _chat_reparse(backend, request, parse)
        except BackendError as exc:
            raise AgentError(f"follow-up answer generation failed: {exc}") from exc
        if claims is None:
            events.append(
                TraceEvent(
                    "agent4_followup",
                    {
                        "component": component.component_text,
                        "question": question,
                        "resolved": False,
                        "note": "follow-up answer had no usable citations",
                    },
                )
            )
            continue
        followup_answer = AttributedAnswer(
            text=raw,
            claims=claims,
            references={index: doc.id for index, doc in enumerate(docs, start=1)},
        )
        previous_length = len(merged.text)
        merged = renumber_citations(merged, followup_answer)
        remapped_text = merged.text[previous_length:].lstrip("\n")
        followups.append((question, remapped_text))
        events.append(
            TraceEvent(
                "agent4_followup",
                {
                    "component": component.component_text,
                    "question": question,
                    "resolved": True,
                    "retrieved": result.doc_ids(),
                },
            )
        )

    second_stage = _combine_results(gap_results, query)
    if not followups:
        events.append(
            TraceEvent(
                "agent4_revise",
                {"synthesized": False, "note": "no follow-up answers produced; keeping the original answer"},
            )
        )
        return RevisionOutcome(answer=answer, second_stage=second_stage, events=tuple(events))

    followup_block = "\n\n".join(
        f"Follow-up question: {question}\nFollow-up answer (already renumbered):\n{text}"
        for question, text in followups
    )
    indexed_docs = [(index, store.get(doc_id)) for index, doc_id in sorted(merged.references.items())]
    system, user = prompts.render(
        "agent4_synthesize",
        query=query,
        original_answer=answer.text,
        followup_answers=followup_block,
        numbered_documents=format_numbered_documents(indexed_docs),
    )
    request = ChatRequest(system, user, tag="agent4:synthesize")

    def parse_synthesis(raw: str):
        claims = _keep_in_range(parse_citations(raw).claims, len(merged.references))
        return claims or None

    try:
        raw, claims = _chat_reparse(backend, request, parse_synthesis)
    except BackendError as exc:
        raise AgentError(f"answer synthesis failed: {exc}") from exc
    if claims is None:
        # The mechanical merge keeps every invariant; prefer it over aborting.
        events.append(
            TraceEvent(
                "agent4_revise",
                {
                    "synthesized": False,
                    "note": "synthesis reply had no usable citations; keeping the mechanical merge",
                },
            )
        )
        return RevisionOutcome(answer=merged, second_stage=second_stage, events=tuple(events))
    final = AttributedAnswer(text=raw, claims=claims, references=dict(merged.references))
    events.append(TraceEvent("agent4_revise", {"synthesized": True}))
    return RevisionOutcome(answer=final, second_stage=second_stage, events=tuple(events))


def _combine_results(results: Sequence[RetrievalResult], query: str) -> RetrievalResult | None:
    """One container for the second-stage documents across gap retrievals."""
    if not results:
        return None
    if len(results) == 1:
        return results[0]
    scores: dict[str, float] = {}
    for result in results:
        for entry in result.entries:
            scores[entry.doc_id] = entry.score  # exclusion keeps gap pools disjoint
    return RetrievalResult(
        query_text=query, entries=rank_by_score(scores, len(scores)), source="hybrid"
    )


# ---------------------------------------------------------------------------
# Orchestrator


class Pipeline:
    """Runs the retrieval and agent stages for one query at a time.

    Instances are safe to share across threads: indexes and configuration are
    immutable and each `run` keeps its own trace.
    """

    def __init__(
        self,
        store: DocumentStore,
        sparse_index: SparseIndex,
        dense_index: DenseIndex,
        provider: EmbeddingProvider,
        backend: Backend,
        config: PipelineConfig | None = None,
        prompts: PromptLibrary | None = None,
    ):
        if not backend.supports_logprobs:
            raise CapabilityError(
                "the answering pipeline needs first-token log-probabilities for relevance judging"
            )
        self.store = store
        self.sparse_index = sparse_index
        self.dense_index = dense_index
        self.provider = provider
        self.backend = backend
        self.config = config or PipelineConfig()
        self.prompts = prompts or PromptLibrary()

    def _map(self, worker, items: Sequence):
        limit = self.config.parallelism
        if limit <= 1 or len(items) <= 1:
            return [worker(item) for item in items]
        with ThreadPoolExecutor(max_workers=min(limit, len(items))) as pool:
            return list(pool.map(worker, items))

    def run(self, query: str) -> PipelineOutput:
        if not query or not query.strip():
            raise ValueError("query must be non-empty")
        trace: list[TraceEvent] = []

        def guard(stage: str, fn, *args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except (CiteQAError, ValueError) as exc:
                raise PipelineError(stage, str(exc), trace=tuple(trace)) from exc

        first = guard(
            "retrieval",
            search_hybrid,
            self.sparse_index,
            self.dense_index,
            self.provider,
            query,
            self.config.retrieval,
        )
        if not first.entries:
            raise PipelineError("retrieval", "no documents retrieved for the query", tuple(trace))
        trace.append(TraceEvent("retrieval", {"stage": "first", "doc_ids": first.doc_ids()}))
        docs = [self.store.get(entry.doc_id) for entry in first.entries]

        triplets = guard(
            "agent1",
            self._map,
            lambda doc: agent1_predict(self.backend, self.prompts, query, doc),
            docs,
        )
        for triplet in triplets:
            trace.append(TraceEvent("agent1", {"doc_id": triplet.doc_id, "answer": triplet.answer_text}))

        pairs = list(zip(triplets, docs))
        judgments = guard(
            "agent2",
            self._map,
            lambda pair: agent2_judge(self.backend, self.prompts, pair[0], pair[1]),
            pairs,
        )
        for judgment in judgments:
            data = {
                "doc_id": judgment.doc_id,
                "log_p_yes": judgment.log_p_yes,
                "log_p_no": judgment.log_p_no,
                "score": judgment.score,
            }
            if judgment.floored:
                data["floored"] = list(judgment.floored)
            trace.append(TraceEvent("agent2", data))

        decision = guard("filter", filter_documents, judgments, self.config.n_filter)
        trace.append(TraceEvent("filter", decision.to_dict()))

        retained_docs = [self.store.get(doc_id) for doc_id in decision.retained]
        answer = guard("agent3", agent3_generate, self.backend, self.prompts, query, retained_docs)
        raw_indices = {
            index for claim in parse_citations(answer.text).claims for index in claim.citations
        }
        agent3_data: dict = {"text": answer.text, "claims": len(answer.claims)}
        dropped = sorted(raw_indices - answer.cited_indices())
        if dropped:
            agent3_data["dropped_citations"] = dropped
        trace.append(TraceEvent("agent3", agent3_data))

        report = guard("agent4_analyze", agent4_analyze, self.backend, self.prompts, query, answer)
        trace.append(TraceEvent("agent4_analyze", report.to_dict()))

        second: RetrievalResult | None = None
        current = report
        rounds = 0
        while current.needs_revision and rounds < self.config.max_revision_rounds:
            rounds += 1
            excluded = set(first.doc_ids())
            if second is not None:
                excluded |= set(second.doc_ids())
            outcome = guard(
                "agent4_revise",
                agent4_revise,
                self.backend,
                self.prompts,
                self.store,
                self.sparse_index,
                self.dense_index,
                self.provider,
                query,
                answer,
                current,
                self.config.retrieval,
                excluded,
            )
            answer = outcome.answer
            trace.extend(outcome.events)
            second = _merge_optional(second, outcome.second_stage, query)
            if rounds < self.config.max_revision_rounds:
                current = guard(
                    "agent4_analyze", agent4_analyze, self.backend, self.prompts, query, answer
                )
                trace.append(TraceEvent("agent4_analyze", current.to_dict()))

        output = PipelineOutput(
            final_answer=answer,
            first_stage=first,
            filter_decision=decision,
            completeness=report,
            second_stage=second,
            trace=tuple(trace),
        )
        self._check_closure(output)
        return output

    @staticmethod
    def _check_closure(output: PipelineOutput) -> None:
        available = set(output.first_stage.doc_ids())
        if output.second_stage is not None:
            available |= set(output.second_stage.doc_ids())
        referenced = set(output.final_answer.references.values())
        if not referenced <= available:
            raise PipelineError(
                "output",
                f"answer references documents that were never retrieved: "
                f"{sorted(referenced - available)}",
                trace=output.trace,
            )
        cited = output.final_answer.cited_indices()
        if not cited <= set(output.final_answer.references):
            raise PipelineError(
                "output",
                f"answer cites indices without reference entries: "
                f"{sorted(cited - set(output.final_answer.references))}",
                trace=output.trace,
            )


def _merge_optional(
    existing: RetrievalResult | None, new: RetrievalResult | None, query: str
) -> RetrievalResult | None:
    if new is None:
        return existing
    if existing is None:
        return new
    return _combine_results([existing, new], query)


def run_pipeline(
    query: str,
    store: DocumentStore,
    sparse_index: SparseIndex,
    dense_index: DenseIndex,
    provider: EmbeddingProvider,
    backend: Backend,
    config: PipelineConfig | None = None,
    prompts: PromptLibrary | None = None,
) -> PipelineOutput:
    """Convenience wrapper: build a `Pipeline` and answer one query."""
    pipeline = Pipeline(store, sparse_index, dense_index, provider, backend, config, prompts)
    return pipeline.run(query)
