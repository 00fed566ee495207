"""citeqa: retrieval-augmented question answering with cited, revised answers.

A hybrid sparse-dense retriever feeds a four-agent pipeline that drafts
per-document answers, judges their support from first-token
log-probabilities, filters by a dynamic threshold, generates one cited
answer, and revises it when coverage gaps remain. An evaluation harness
compares retrievers and grades answers with LLM judges.
"""
from .agents import (
    FULLY_ANSWERED,
    NO_ANSWER,
    NOT_ANSWERED,
    PARTIALLY_ANSWERED,
    CompletenessReport,
    FilterDecision,
    Pipeline,
    PipelineConfig,
    PipelineOutput,
    QuestionComponent,
    RelevanceJudgment,
    TraceEvent,
    Triplet,
    agent1_predict,
    agent2_judge,
    agent3_generate,
    agent4_analyze,
    agent4_revise,
    filter_documents,
    run_pipeline,
)
from .attribution import (
    AttributedAnswer,
    Claim,
    ParsedAnswer,
    Violation,
    parse_citations,
    renumber_citations,
    validate_citations,
)
from .config import (
    BackendSettings,
    EmbeddingSettings,
    RunConfig,
    load_config_file,
    make_backends,
    make_embedding_provider,
    make_prompts,
    resolve_config,
)
from .corpus import Document, DocumentStore, load_corpus, tokenize
from .embedding import (
    EmbeddingProvider,
    HttpEmbeddingProvider,
    LocalHashEmbedding,
    embed,
)
from .errors import (
    AgentError,
    BackendError,
    BackendStatusError,
    CapabilityError,
    CiteQAError,
    ConfigError,
    CorpusError,
    EmbeddingError,
    IndexIOError,
    JudgeParseError,
    MalformedResponseError,
    PipelineError,
    RetrievalError,
    ScriptExhaustedError,
    TransportError,
    UnknownDocumentError,
)
from .evaluation import (
    EvalRecord,
    EvalSummary,
    QARecord,
    aggregate,
    evaluate_dataset,
    evaluate_question,
    judge_correctness,
    judge_faithfulness,
    load_qa,
    mrr_at_k,
    recall_at_k,
)
from .llm import (
    DEFAULT_LOGPROB_FLOOR,
    Backend,
    BackendCall,
    CandidateLogProbs,
    ChatRequest,
    ChatResponse,
    HttpBackend,
    ScriptedBackend,
    load_mock_script,
    load_scripted_backend,
)
from .prompts import PromptLibrary
from .report import format_summary_table, render_figures, write_report_jsonl
from .retrieval import (
    DenseIndex,
    HybridConfig,
    RetrievalResult,
    ScoredDoc,
    SparseIndex,
    build_dense_index,
    build_manifest,
    build_sparse_index,
    corpus_sha256,
    fuse_hybrid,
    load_dense_index,
    load_manifest,
    load_sparse_index,
    normalize_scores,
    save_dense_index,
    save_manifest,
    save_sparse_index,
    search_dense,
    search_hybrid,
    search_hybrid_excluding,
    search_sparse,
)

__version__ = "0.1.0"

__all__ = [
    "AgentError",
    "AttributedAnswer",
    "Backend",
    "BackendCall",
    "BackendError",
    "BackendSettings",
    "BackendStatusError",
    "CandidateLogProbs",
    "CapabilityError",
    "ChatRequest",
    "ChatResponse",
    "CiteQAError",
    "Claim",
    "CompletenessReport",
    "ConfigError",
    "CorpusError",
    "DEFAULT_LOGPROB_FLOOR",
    "DenseIndex",
    "Document",
    "DocumentStore",
    "EmbeddingError",
    "EmbeddingProvider",
    "EmbeddingSettings",
    "EvalRecord",
    "EvalSummary",
    "FULLY_ANSWERED",
    "FilterDecision",
    "HttpBackend",
    "HttpEmbeddingProvider",
    "HybridConfig",
    "IndexIOError",
    "JudgeParseError",
    "LocalHashEmbedding",
    "MalformedResponseError",
    "NOT_ANSWERED",
    "NO_ANSWER",
    "PARTIALLY_ANSWERED",
    "ParsedAnswer",
    "Pipeline",
    "PipelineConfig",
    "PipelineError",
    "PipelineOutput",
    "PromptLibrary",
    "QARecord",
    "QuestionComponent",
    "RelevanceJudgment",
    "RetrievalError",
    "RetrievalResult",
    "RunConfig",
    "ScoredDoc",
    "ScriptExhaustedError",
    "ScriptedBackend",
    "SparseIndex",
    "TraceEvent",
    "TransportError",
    "Triplet",
    "UnknownDocumentError",
    "Violation",
    "agent1_predict",
    "agent2_judge",
    "agent3_generate",
    "agent4_analyze",
    "agent4_revise",
    "aggregate",
    "build_dense_index",
    "build_manifest",
    "build_sparse_index",
    "corpus_sha256",
    "embed",
    "evaluate_dataset",
    "evaluate_question",
    "filter_documents",
    "format_summary_table",
    "fuse_hybrid",
    "judge_correctness",
    "judge_faithfulness",
    "load_config_file",
    "load_corpus",
    "load_dense_index",
    "load_manifest",
    "load_mock_script",
    "load_qa",
    "load_scripted_backend",
    "load_sparse_index",
    "make_backends",
    "make_embedding_provider",
    "make_prompts",
    "mrr_at_k",
    "normalize_scores",
    "parse_citations",
    "recall_at_k",
    "render_figures",
    "renumber_citations",
    "resolve_config",
    "run_pipeline",
    "save_dense_index",
    "save_manifest",
    "save_sparse_index",
    "search_dense",
    "search_hybrid",
    "search_hybrid_excluding",
    "search_sparse",
    "tokenize",
    "validate_citations",
    "write_report_jsonl",
]
