"""Exception hierarchy shared across the package."""
from __future__ import annotations


class CiteQAError(Exception):
    """Base class for every error raised by this package."""


class ConfigError(CiteQAError):
    """Invalid or inconsistent run configuration."""


class CorpusError(CiteQAError):
    """Corpus file unreadable, malformed, or violating document invariants."""


class UnknownDocumentError(CorpusError):
    """Lookup of a document id that was never ingested."""


class RetrievalError(CiteQAError):
    """Index construction or query execution failure."""


class EmbeddingError(RetrievalError):
    """Embedding provider failure: unreachable, wrong dimension, or degenerate vector."""


class IndexIOError(RetrievalError):
    """Index files missing, corrupt, or inconsistent with their manifest."""


class BackendError(CiteQAError):
    """LLM backend failure."""


class TransportError(BackendError):
    """Network-level failure talking to a remote backend."""

    def __init__(self, message: str, attempts: int = 1):
        super().__init__(message)
        self.attempts = attempts


class BackendStatusError(BackendError):
    """Remote backend replied with a non-success HTTP status."""

    def __init__(self, message: str, status_code: int, attempts: int = 1):
        super().__init__(message)
        self.status_code = status_code
        self.attempts = attempts


class MalformedResponseError(BackendError):
    """Remote backend replied with a body the client cannot interpret."""


class CapabilityError(BackendError):
    """Backend lacks a capability the caller requires, e.g. token log-probabilities."""


class ScriptExhaustedError(BackendError):
    """Scripted backend ran out of scripted responses."""


class AgentError(CiteQAError):
    """An agent produced unusable output or its backend call failed.

    `raw_text` carries the last unparseable reply when that is the cause.
    """

    def __init__(self, message: str, doc_id: str | None = None, raw_text: str | None = None):
        super().__init__(message)
        self.doc_id = doc_id
        self.raw_text = raw_text


class PipelineError(CiteQAError):
    """A pipeline stage failed. Carries the stage name and the partial trace."""

    def __init__(self, stage: str, message: str, trace: tuple = ()):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.trace = trace


class JudgeParseError(CiteQAError):
    """Grading reply did not contain a usable score line after a reprompt."""
