"""Run configuration: defaults, config-file values, and flag overrides.

Precedence is flags over config file over built-in defaults. Auth tokens are
never part of the configuration; they come from the environment variables
CITEQA_BACKEND_TOKEN, CITEQA_JUDGE_TOKEN, and CITEQA_EMBED_TOKEN.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

from .agents import PipelineConfig
from .embedding import EmbeddingProvider, HttpEmbeddingProvider, LocalHashEmbedding
from .errors import ConfigError
from .llm import DEFAULT_LOGPROB_FLOOR, Backend, HttpBackend, load_mock_script
from .prompts import PromptLibrary
from .retrieval import HybridConfig

_TOP_LEVEL_KEYS = {
    "corpus",
    "qa",
    "output_dir",
    "alpha",
    "pool_size",
    "final_k",
    "bm25_k1",
    "bm25_b",
    "n_filter",
    "max_revision_rounds",
    "parallelism",
    "prompt_dir",
    "mock_script",
    "backend",
    "judge",
    "embedding",
}

_BACKEND_KEYS = ("url", "model", "timeout", "retries", "logprob_floor")
_EMBEDDING_KEYS = ("kind", "url", "dimension")


@dataclass(frozen=True)
class BackendSettings:
    """Connection settings for one OpenAI-style chat-completions endpoint."""

    url: str | None = None
    model: str | None = None
    timeout: float = 30.0
    retries: int = 2
    logprob_floor: float = DEFAULT_LOGPROB_FLOOR

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError(f"timeout must be positive, got {self.timeout}")
        if self.retries < 0:
            raise ValueError(f"retries must be >= 0, got {self.retries}")
        if self.logprob_floor >= 0:
            raise ValueError(f"logprob_floor must be negative, got {self.logprob_floor}")

    def to_dict(self) -> dict:
        return {
            "url": self.url,
            "model": self.model,
            "timeout": self.timeout,
            "retries": self.retries,
            "logprob_floor": self.logprob_floor,
        }


@dataclass(frozen=True)
class EmbeddingSettings:
    kind: str = "local"
    url: str | None = None
    dimension: int = 256

    def __post_init__(self) -> None:
        if self.kind not in ("local", "http"):
            raise ValueError(f"embedding kind must be 'local' or 'http', got {self.kind!r}")
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "url": self.url, "dimension": self.dimension}


@dataclass(frozen=True)
class RunConfig:
    corpus_path: str | None = None
    qa_path: str | None = None
    output_dir: str = "citeqa_out"
    alpha: float = 0.65
    pool_size: int = 50
    final_k: int = 20
    bm25_k1: float = 1.2
    bm25_b: float = 0.75
    n_filter: float = 0.5
    max_revision_rounds: int = 1
    parallelism: int = 1
    prompt_dir: str | None = None
    mock_script: str | None = None
    backend: BackendSettings = BackendSettings()
    judge: BackendSettings | None = None
    embedding: EmbeddingSettings = EmbeddingSettings()

    def __post_init__(self) -> None:
        try:
            self.pipeline_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    def hybrid_config(self) -> HybridConfig:
        return HybridConfig(
            alpha=self.alpha,
            pool_size=self.pool_size,
            final_k=self.final_k,
            bm25_k1=self.bm25_k1,
            bm25_b=self.bm25_b,
        )

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            retrieval=self.hybrid_config(),
            n_filter=self.n_filter,
            max_revision_rounds=self.max_revision_rounds,
            parallelism=self.parallelism,
        )

    def to_dict(self) -> dict:
        """Snapshot of the resolved configuration. Tokens are never included."""
        return {
            "corpus": self.corpus_path,
            "qa": self.qa_path,
            "output_dir": self.output_dir,
            "alpha": self.alpha,
            "pool_size": self.pool_size,
            "final_k": self.final_k,
            "bm25_k1": self.bm25_k1,
            "bm25_b": self.bm25_b,
            "n_filter": self.n_filter,
            "max_revision_rounds": self.max_revision_rounds,
            "parallelism": self.parallelism,
            "prompt_dir": self.prompt_dir,
            "mock_script": self.mock_script,
            "backend": self.backend.to_dict(),
            "judge": self.judge.to_dict() if self.judge else None,
            "embedding": self.embedding.to_dict(),
        }


def load_config_file(path: str | Path) -> dict:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
    if not isinstance(payload, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return payload


def _merge_section(payload: dict, over: dict, name: str, keys: tuple[str, ...]) -> dict:
    raw = payload.get(name) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config section {name!r} must be a JSON object")
    unknown = set(raw) - set(keys)
    if unknown:
        raise ConfigError(f"unknown keys in config section {name!r}: {sorted(unknown)}")
    merged = dict(raw)
    for key in keys:
        value = over.pop(f"{name}_{key}", None)
        if value is not None:
            merged[key] = value
    return merged


def _backend_settings(raw: dict) -> BackendSettings:
    return BackendSettings(
        url=raw.get("url"),
        model=raw.get("model"),
        timeout=float(raw.get("timeout", 30.0)),
        retries=int(raw.get("retries", 2)),
        logprob_floor=float(raw.get("logprob_floor", DEFAULT_LOGPROB_FLOOR)),
    )


def resolve_config(file_payload: dict | None = None, overrides: dict | None = None) -> RunConfig:
    """Merge defaults, config-file values, and overrides into a RunConfig.

    Override keys use the flat names alpha, pool_size, ... plus section-prefixed
    names such as backend_url or embedding_dimension. None values are ignored,
    so argparse results can be passed straight through.
    """
    payload = dict(file_payload or {})
    unknown = set(payload) - _TOP_LEVEL_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    over = {key: value for key, value in (overrides or {}).items() if value is not None}

    backend_raw = _merge_section(payload, over, "backend", _BACKEND_KEYS)
    judge_raw = _merge_section(payload, over, "judge", _BACKEND_KEYS)
    embedding_raw = _merge_section(payload, over, "embedding", _EMBEDDING_KEYS)

    def pick(key: str, default):
        if key in over:
            return over.pop(key)
        return payload.get(key, default)

    def optional_str(value) -> str | None:
        return None if value is None else str(value)

    try:
        config = RunConfig(
            corpus_path=optional_str(pick("corpus", None)),
            qa_path=optional_str(pick("qa", None)),
            output_dir=str(pick("output_dir", "citeqa_out")),
            alpha=float(pick("alpha", 0.65)),
            pool_size=int(pick("pool_size", 50)),
            final_k=int(pick("final_k", 20)),
            bm25_k1=float(pick("bm25_k1", 1.2)),
            bm25_b=float(pick("bm25_b", 0.75)),
            n_filter=float(pick("n_filter", 0.5)),
            max_revision_rounds=int(pick("max_revision_rounds", 1)),
            parallelism=int(pick("parallelism", 1)),
            prompt_dir=optional_str(pick("prompt_dir", None)),
            mock_script=optional_str(pick("mock_script", None)),
            backend=_backend_settings(backend_raw),
            judge=_backend_settings(judge_raw) if judge_raw else None,
            embedding=EmbeddingSettings(
                kind=str(embedding_raw.get("kind", "local")),
                url=embedding_raw.get("url"),
                dimension=int(embedding_raw.get("dimension", 256)),
            ),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid configuration value: {exc}") from exc
    if over:
        raise ConfigError(f"unknown override keys: {sorted(over)}")
    return config


# ---------------------------------------------------------------------------
# Factories


def make_embedding_provider(config: RunConfig) -> EmbeddingProvider:
    settings = config.embedding
    if settings.kind == "local":
        return LocalHashEmbedding(dimension=settings.dimension)
    if not settings.url:
        raise ConfigError(
            "embedding: an HTTP provider needs a url (set embedding.url or pass --embed-url)"
        )
    return HttpEmbeddingProvider(
        url=settings.url,
        dimension=settings.dimension,
        token=os.environ.get("CITEQA_EMBED_TOKEN"),
    )


def _http_backend(settings: BackendSettings, env_var: str, label: str) -> HttpBackend:
    if not settings.url or not settings.model:
        raise ConfigError(
            f"{label}: an HTTP backend needs both url and model "
            f"(set them in the config file or pass --{label}-url and --{label}-model)"
        )
    return HttpBackend(
        url=settings.url,
        model=settings.model,
        token=os.environ.get(env_var),
        timeout=settings.timeout,
        retries=settings.retries,
        logprob_floor=settings.logprob_floor,
    )


def make_backends(config: RunConfig) -> tuple[Backend, Backend | None]:
    """Build the (pipeline, judge) backends; judge may be None.

    A mock script replaces every HTTP backend: its pipeline section drives the
    agents and its optional judge section drives the judges.
    """
    if config.mock_script:
        backends = load_mock_script(config.mock_script)
        return backends["pipeline"], backends.get("judge")
    pipeline = _http_backend(config.backend, "CITEQA_BACKEND_TOKEN", "backend")
    judge = _http_backend(config.judge, "CITEQA_JUDGE_TOKEN", "judge") if config.judge else None
    return pipeline, judge


def make_prompts(config: RunConfig) -> PromptLibrary:
    return PromptLibrary(override_dir=config.prompt_dir)
