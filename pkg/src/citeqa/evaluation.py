"""Evaluation harness: retrieval metrics, LLM judges, dataset aggregation.

Each QA record runs through the full pipeline once; sparse-only and
dense-only searches run alongside it so the three retrievers can be compared
on the same questions. Answer quality comes from two LLM judges that reply
with an anchored `SCORE:` line.
"""
from __future__ import annotations

import json
import re
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .agents import Pipeline, format_numbered_documents
from .embedding import embed
from .errors import CiteQAError, CorpusError, JudgeParseError
from .llm import Backend, ChatRequest
from .prompts import REPROMPT_PREFIX, PromptLibrary
from .retrieval import search_dense, search_sparse

# Judge scales: correctness grades the answer against the gold answer,
# faithfulness grades it against its cited passages.
CORRECTNESS_SCALE = (-1, 0, 1, 2)
FAITHFULNESS_SCALE = (-1, 0, 1)

SYSTEMS = ("sparse", "dense", "hybrid")

_SCORE_RE = re.compile(r"^SCORE:\s*(-?\d+)\s*$", re.MULTILINE)


@dataclass(frozen=True)
class QARecord:
    """One evaluation item: a question, its gold answer, and gold documents."""

    id: str
    question: str
    answer: str
    gold_doc_ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("id must be non-empty")
        if not self.question or not self.question.strip():
            raise ValueError("question must be non-empty")
        if not self.answer or not self.answer.strip():
            raise ValueError("answer must be non-empty")
        if not self.gold_doc_ids:
            raise ValueError("gold_doc_ids must be non-empty")
        if len(set(self.gold_doc_ids)) != len(self.gold_doc_ids):
            raise ValueError("gold_doc_ids must be unique")


def load_qa(path: str | Path) -> tuple[QARecord, ...]:
    """Read QA records from JSONL. Blank lines and `#` comment lines are skipped."""
    path = Path(path)
    try:
        raw_lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise CorpusError(f"cannot read QA file {path}: {exc}") from exc
    records: list[QARecord] = []
    seen: dict[str, int] = {}
    for lineno, line in enumerate(raw_lines, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        try:
            payload = json.loads(stripped)
        except json.JSONDecodeError as exc:
            raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise CorpusError(f"{path}:{lineno}: expected a JSON object")
        try:
            gold = payload["gold_doc_ids"]
        except KeyError:
            raise CorpusError(f"{path}:{lineno}: missing field 'gold_doc_ids'") from None
        if isinstance(gold, (str, bytes)) or not isinstance(gold, list):
            raise CorpusError(f"{path}:{lineno}: gold_doc_ids must be a list of doc ids")
        try:
            record = QARecord(
                id=str(payload["id"]),
                question=str(payload["question"]),
                answer=str(payload["answer"]),
                gold_doc_ids=tuple(str(doc_id) for doc_id in gold),
            )
        except KeyError as exc:
            raise CorpusError(f"{path}:{lineno}: missing field {exc.args[0]!r}") from None
        except ValueError as exc:
            raise CorpusError(f"{path}:{lineno}: {exc}") from exc
        if record.id in seen:
            raise CorpusError(
                f"{path}:{lineno}: duplicate QA id {record.id!r} "
                f"(lines {seen[record.id]} and {lineno})"
            )
        seen[record.id] = lineno
        records.append(record)
    if not records:
        raise CorpusError(f"{path}: no QA records found")
    return tuple(records)


# ---------------------------------------------------------------------------
# Retrieval metrics


def recall_at_k(ranked_ids: Sequence[str], gold_ids: Sequence[str], k: int) -> float:
    """Fraction of gold documents present in the top-k ranked ids."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gold = set(gold_ids)
    if not gold:
        raise ValueError("gold_ids must be non-empty")
    return len(gold.intersection(list(ranked_ids)[:k])) / len(gold)


def mrr_at_k(ranked_ids: Sequence[str], gold_ids: Sequence[str], k: int) -> float:
    """Reciprocal rank of the first gold document in the top k, or 0.0."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    gold = set(gold_ids)
    if not gold:
        raise ValueError("gold_ids must be non-empty")
    for position, doc_id in enumerate(list(ranked_ids)[:k], start=1):
        if doc_id in gold:
            return 1.0 / position
    return 0.0


# ---------------------------------------------------------------------------
# LLM judges


def _parse_score(reply: str, scale: Sequence[int]) -> int | None:
    """Last anchored SCORE line wins; values off the scale are rejected."""
    matches = _SCORE_RE.findall(reply)
    if not matches:
        return None
    value = int(matches[-1])
    return value if value in scale else None


def _judge(backend: Backend, system: str, user: str, scale: Sequence[int], tag: str) -> int:
    raw = backend.chat(ChatRequest(system, user, tag=tag)).text
    score = _parse_score(raw, scale)
    if score is None:
        raw = backend.chat(ChatRequest(system, REPROMPT_PREFIX + user, tag=tag)).text
        score = _parse_score(raw, scale)
        if score is None:
            raise JudgeParseError(f"judge reply had no valid SCORE line: {raw!r}")
    return score


def judge_correctness(
    backend: Backend, prompts: PromptLibrary, question: str, gold_answer: str, predicted: str
) -> int:
    """Grade the predicted answer against the gold answer: -1, 0, 1, or 2."""
    system, user = prompts.render(
        "judge_correctness", question=question, gold=gold_answer, predicted=predicted
    )
    return _judge(backend, system, user, CORRECTNESS_SCALE, "judge:correctness")


def judge_faithfulness(
    backend: Backend, prompts: PromptLibrary, answer_text: str, passages: str
) -> int:
    """Grade whether the answer is supported by its cited passages: -1, 0, or 1."""
    system, user = prompts.render("judge_faithfulness", answer=answer_text, passages=passages)
    return _judge(backend, system, user, FAITHFULNESS_SCALE, "judge:faithfulness")


# ---------------------------------------------------------------------------
# Per-question evaluation


@dataclass(frozen=True)
class EvalRecord:
    qa_id: str
    question: str
    predicted: str | None
    retrieval: dict[str, dict[str, float]] | None
    correctness: int | None
    faithfulness: int | None
    needed_revision: bool = False
    revised: bool = False
    degraded: bool = False
    failure: str | None = None

    @property
    def failed(self) -> bool:
        return self.failure is not None

    def to_dict(self) -> dict:
        return {
            "kind": "question",
            "qa_id": self.qa_id,
            "question": self.question,
            "predicted": self.predicted,
            "retrieval": self.retrieval,
            "correctness": self.correctness,
            "faithfulness": self.faithfulness,
            "needed_revision": self.needed_revision,
            "revised": self.revised,
            "degraded": self.degraded,
            "failure": self.failure,
        }


def _failure(record: QARecord, message: str) -> EvalRecord:
    return EvalRecord(
        qa_id=record.id,
        question=record.question,
        predicted=None,
        retrieval=None,
        correctness=None,
        faithfulness=None,
        failure=message,
    )


def evaluate_question(
    pipeline: Pipeline,
    record: QARecord,
    judge_backend: Backend | None = None,
    k: int | None = None,
) -> EvalRecord:
    """Run one QA record through the pipeline and score the result.

    Pipeline and judge errors become a failure record instead of aborting the
    dataset run. Judges are skipped when judge_backend is None.
    """
    cfg = pipeline.config.retrieval
    if k is None:
        k = cfg.final_k
    if not 1 <= k <= cfg.final_k:
        raise ValueError(f"k must be between 1 and final_k={cfg.final_k}, got {k}")
    store = pipeline.store
    missing = sorted(set(record.gold_doc_ids) - set(store.ids()))
    if missing:
        return _failure(record, f"gold documents missing from the corpus: {missing}")
    try:
        output = pipeline.run(record.question)
        sparse = search_sparse(
            pipeline.sparse_index, record.question, k, k1=cfg.bm25_k1, b=cfg.bm25_b
        )
        query_vector = embed(pipeline.provider, record.question)
        dense = search_dense(pipeline.dense_index, query_vector, k, query_text=record.question)
        ranked = {
            "sparse": sparse.doc_ids(),
            "dense": dense.doc_ids(),
            "hybrid": output.first_stage.doc_ids(),
        }
        retrieval = {
            system: {
                "recall": recall_at_k(ids, record.gold_doc_ids, k),
                "mrr": mrr_at_k(ids, record.gold_doc_ids, k),
            }
            for system, ids in ranked.items()
        }
        correctness = faithfulness = None
        if judge_backend is not None:
            final = output.final_answer
            correctness = judge_correctness(
                judge_backend, pipeline.prompts, record.question, record.answer, final.text
            )
            passages = format_numbered_documents(
                [(index, store.get(doc_id)) for index, doc_id in sorted(final.references.items())]
            )
            faithfulness = judge_faithfulness(
                judge_backend, pipeline.prompts, final.text, passages
            )
        return EvalRecord(
            qa_id=record.id,
            question=record.question,
            predicted=output.final_answer.text,
            retrieval=retrieval,
            correctness=correctness,
            faithfulness=faithfulness,
            needed_revision=output.completeness.needs_revision,
            revised=output.second_stage is not None,
            degraded=output.completeness.degraded,
        )
    except CiteQAError as exc:
        return _failure(record, str(exc))


# ---------------------------------------------------------------------------
# Aggregation


@dataclass(frozen=True)
class EvalSummary:
    question_count: int
    failure_count: int
    retrieval: dict[str, dict[str, float]]
    correctness_mean: float | None
    faithfulness_mean: float | None
    correctness_counts: dict[int, int]
    faithfulness_counts: dict[int, int]
    needed_revision_count: int
    revised_count: int
    degraded_count: int

    def to_dict(self) -> dict:
        return {
            "kind": "summary",
            "question_count": self.question_count,
            "failure_count": self.failure_count,
            "retrieval": self.retrieval,
            "correctness_mean": self.correctness_mean,
            "faithfulness_mean": self.faithfulness_mean,
            "correctness_counts": {str(k): v for k, v in sorted(self.correctness_counts.items())},
            "faithfulness_counts": {str(k): v for k, v in sorted(self.faithfulness_counts.items())},
            "needed_revision_count": self.needed_revision_count,
            "revised_count": self.revised_count,
            "degraded_count": self.degraded_count,
        }


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


def aggregate(records: Sequence[EvalRecord]) -> EvalSummary:
    """Mean metrics over non-failed records; failures are counted, not scored."""
    if not records:
        raise ValueError("no evaluation records to aggregate")
    ok = [record for record in records if not record.failed]
    retrieval: dict[str, dict[str, float]] = {}
    for system in SYSTEMS:
        rows = [record.retrieval[system] for record in ok if record.retrieval]
        if rows:
            retrieval[system] = {
                "recall": sum(row["recall"] for row in rows) / len(rows),
                "mrr": sum(row["mrr"] for row in rows) / len(rows),
            }
    correctness = [r.correctness for r in ok if r.correctness is not None]
    faithfulness = [r.faithfulness for r in ok if r.faithfulness is not None]
    return EvalSummary(
        question_count=len(records),
        failure_count=len(records) - len(ok),
        retrieval=retrieval,
        correctness_mean=_mean(correctness),
        faithfulness_mean=_mean(faithfulness),
        correctness_counts=dict(Counter(correctness)),
        faithfulness_counts=dict(Counter(faithfulness)),
        needed_revision_count=sum(1 for r in ok if r.needed_revision),
        revised_count=sum(1 for r in ok if r.revised),
        degraded_count=sum(1 for r in ok if r.degraded),
    )


def evaluate_dataset(
    pipeline: Pipeline,
    records: Sequence[QARecord],
    judge_backend: Backend | None = None,
    k: int | None = None,
    parallelism: int = 1,
) -> tuple[list[EvalRecord], EvalSummary]:
    """Evaluate every QA record and aggregate. Order of results matches input."""
    if not records:
        raise ValueError("no QA records to evaluate")
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")

    def worker(record: QARecord) -> EvalRecord:
        return evaluate_question(pipeline, record, judge_backend, k)

    if parallelism <= 1 or len(records) <= 1:
        results = [worker(record) for record in records]
    else:
        with ThreadPoolExecutor(max_workers=min(parallelism, len(records))) as pool:
            results = list(pool.map(worker, records))
    return results, aggregate(results)
