"""LLM backends: chat generation and first-token log-probabilities.

Two implementations share one interface: `ScriptedBackend` replays canned
responses for deterministic runs, `HttpBackend` talks to an OpenAI-style
chat-completions endpoint. Every request/response pair lands in an in-memory
trace for debugging.
"""
from __future__ import annotations

import json
import math
import threading
from collections import deque
from dataclasses import dataclass
from pathlib import Path
from typing import Literal, Sequence

import httpx

from .errors import (
    BackendError,
    BackendStatusError,
    CapabilityError,
    ConfigError,
    MalformedResponseError,
    ScriptExhaustedError,
    TransportError,
)

# Substituted for candidates a provider's truncated top-k list does not cover.
DEFAULT_LOGPROB_FLOOR = math.log(1e-10)

FinishReason = Literal["stop", "length", "error"]


@dataclass(frozen=True)
class ChatRequest:
    system_prompt: str
    user_prompt: str
    max_tokens: int = 512
    temperature: float = 0.0
    # Lets scripted backends key responses per call site, so concurrent
    # per-document calls stay order-independent.
    tag: str | None = None

    def __post_init__(self) -> None:
        if not self.system_prompt:
            raise ValueError("system_prompt must be non-empty")
        if not self.user_prompt:
            raise ValueError("user_prompt must be non-empty")
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")
        if self.temperature < 0.0:
            raise ValueError(f"temperature must be >= 0, got {self.temperature}")


@dataclass(frozen=True)
class ChatResponse:
    text: str
    finish_reason: FinishReason = "stop"


@dataclass(frozen=True)
class CandidateLogProbs:
    """Log-probability of each requested first token.

    Every requested candidate has an entry; the ones the provider did not
    report are filled with the configured floor and listed in `floored`
    rather than silently defaulted.
    """

    logprobs: dict[str, float]
    floored: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        for candidate, value in self.logprobs.items():
            if not math.isfinite(value) or value > 0.0:
                raise ValueError(f"log-probability for {candidate!r} must be finite and <= 0, got {value}")


@dataclass(frozen=True)
class BackendCall:
    """One traced backend interaction."""

    kind: Literal["chat", "logprobs"]
    request: ChatRequest
    response: ChatResponse | CandidateLogProbs | None = None
    error: str | None = None


def _check_candidates(candidates: Sequence[str]) -> None:
    if not candidates:
        raise ValueError("candidates must be non-empty")
    if len(set(candidates)) != len(candidates):
        raise ValueError(f"candidates must be distinct, got {list(candidates)}")


def _fill_candidates(
    found: dict[str, float], candidates: Sequence[str], floor: float
) -> CandidateLogProbs:
    logprobs = {candidate: found.get(candidate, floor) for candidate in candidates}
    missing = frozenset(candidate for candidate in candidates if candidate not in found)
    return CandidateLogProbs(logprobs=logprobs, floored=missing)


class Backend:
    """Interface shared by all backends, plus the request/response trace."""

    supports_logprobs: bool = False

    def __init__(self) -> None:
        self.trace: list[BackendCall] = []
        self._trace_lock = threading.Lock()

    def _record(self, call: BackendCall) -> None:
        with self._trace_lock:
            self.trace.append(call)

    def chat(self, request: ChatRequest) -> ChatResponse:
        raise NotImplementedError

    def first_token_logprobs(
        self, request: ChatRequest, candidates: Sequence[str]
    ) -> CandidateLogProbs:
        raise CapabilityError("this backend does not expose token log-probabilities")


@dataclass(frozen=True)
class _ScriptedFailure:
    message: str


class ScriptedBackend(Backend):
    """Replays scripted responses in order and fails loudly on exhaustion.

    Entries may be keyed by request tag; a request first drains the queue for
    its tag, then falls back to the shared untagged queue. Consumption is
    serialized with a lock so concurrent callers pop atomically.
    """

    def __init__(
        self,
        *,
        supports_logprobs: bool = True,
        logprob_floor: float = DEFAULT_LOGPROB_FLOOR,
    ):
        super().__init__()
        self.supports_logprobs = supports_logprobs
        self.logprob_floor = logprob_floor
        self._lock = threading.Lock()
        self._chat_scripts: dict[str | None, deque] = {None: deque()}
        self._logprob_scripts: dict[str | None, deque] = {None: deque()}

    def script_chat(
        self, text: str, *, tag: str | None = None, finish_reason: FinishReason | None = None
    ) -> "ScriptedBackend":
        self._chat_scripts.setdefault(tag, deque()).append((text, finish_reason))
        return self

    def script_logprobs(self, values: dict[str, float], *, tag: str | None = None) -> "ScriptedBackend":
        self._logprob_scripts.setdefault(tag, deque()).append(dict(values))
        return self

    def script_chat_error(self, message: str, *, tag: str | None = None) -> "ScriptedBackend":
        self._chat_scripts.setdefault(tag, deque()).append(_ScriptedFailure(message))
        return self

    def script_logprob_error(self, message: str, *, tag: str | None = None) -> "ScriptedBackend":
        self._logprob_scripts.setdefault(tag, deque()).append(_ScriptedFailure(message))
        return self

    def remaining(self) -> int:
        with self._lock:
            chats = sum(len(q) for q in self._chat_scripts.values())
            logprobs = sum(len(q) for q in self._logprob_scripts.values())
        return chats + logprobs

    def _pop(self, scripts: dict[str | None, deque], tag: str | None, kind: str):
        with self._lock:
            if tag is not None:
                queue = scripts.get(tag)
                if queue:
                    return queue.popleft()
            queue = scripts[None]
            if queue:
                return queue.popleft()
        raise ScriptExhaustedError(f"no scripted {kind} response left (request tag {tag!r})")

    def chat(self, request: ChatRequest) -> ChatResponse:
        entry = self._pop(self._chat_scripts, request.tag, "chat")
        if isinstance(entry, _ScriptedFailure):
            self._record(BackendCall("chat", request, error=entry.message))
            raise BackendError(entry.message)
        text, forced_reason = entry
        if forced_reason is None:
            tokens = text.split()
            if len(tokens) > request.max_tokens:
                text = " ".join(tokens[: request.max_tokens])
                reason: FinishReason = "length"
            else:
                reason = "stop"
        else:
            reason = forced_reason
        response = ChatResponse(text=text, finish_reason=reason)
        self._record(BackendCall("chat", request, response=response))
        return response

    def first_token_logprobs(
        self, request: ChatRequest, candidates: Sequence[str]
    ) -> CandidateLogProbs:
        _check_candidates(candidates)
        if not self.supports_logprobs:
            raise CapabilityError("scripted backend was configured without log-probability support")
        entry = self._pop(self._logprob_scripts, request.tag, "logprob")
        if isinstance(entry, _ScriptedFailure):
            self._record(BackendCall("logprobs", request, error=entry.message))
            raise BackendError(entry.message)
        result = _fill_candidates(entry, candidates, self.logprob_floor)
        self._record(BackendCall("logprobs", request, response=result))
        return result


class HttpBackend(Backend):
    """Client for an OpenAI-style chat-completions endpoint.

    Transport errors and 5xx statuses are retried up to `retries` extra
    attempts; the raised error records how many attempts were made.
    """

    def __init__(
        self,
        url: str,
        model: str,
        *,
        token: str | None = None,
        timeout: float = 30.0,
        retries: int = 2,
        supports_logprobs: bool = True,
        logprob_floor: float = DEFAULT_LOGPROB_FLOOR,
        top_logprobs: int = 20,
    ):
        super().__init__()
        if not url:
            raise ValueError("url must be non-empty")
        if not model:
            raise ValueError("model must be non-empty")
        if retries < 0:
            raise ValueError(f"retries must be >= 0, got {retries}")
        self.url = url
        self.model = model
        self.retries = retries
        self.supports_logprobs = supports_logprobs
        self.logprob_floor = logprob_floor
        self.top_logprobs = top_logprobs
        self._headers = {"Authorization": f"Bearer {token}"} if token else {}
        self._client = httpx.Client(timeout=timeout)

    def close(self) -> None:
        self._client.close()

    def _post(self, payload: dict) -> dict:
        attempts = 0
        while True:
            attempts += 1
            try:
                response = self._client.post(self.url, json=payload, headers=self._headers)
            except httpx.HTTPError as exc:
                if attempts > self.retries:
                    raise TransportError(
                        f"backend unreachable after {attempts} attempts: {exc}", attempts=attempts
                    ) from exc
                continue
            if response.status_code >= 500 and attempts <= self.retries:
                continue
            if response.status_code != 200:
                raise BackendStatusError(
                    f"backend returned HTTP {response.status_code}",
                    status_code=response.status_code,
                    attempts=attempts,
                )
            try:
                return response.json()
            except (json.JSONDecodeError, ValueError) as exc:
                raise MalformedResponseError(f"backend returned a non-JSON body: {exc}") from exc

    def _payload(self, request: ChatRequest) -> dict:
        return {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": request.user_prompt},
            ],
            "max_tokens": request.max_tokens,
            "temperature": request.temperature,
        }

    def chat(self, request: ChatRequest) -> ChatResponse:
        try:
            body = self._post(self._payload(request))
            try:
                choice = body["choices"][0]
                text = choice["message"]["content"]
                raw_reason = choice.get("finish_reason", "stop")
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponseError(f"chat response missing fields: {exc}") from exc
        except BackendError as exc:
            self._record(BackendCall("chat", request, error=str(exc)))
            raise
        if not isinstance(text, str):
            error = MalformedResponseError("chat response content is not a string")
            self._record(BackendCall("chat", request, error=str(error)))
            raise error
        reason: FinishReason = raw_reason if raw_reason in ("stop", "length") else "error"
        response = ChatResponse(text=text, finish_reason=reason)
        self._record(BackendCall("chat", request, response=response))
        return response

    def first_token_logprobs(
        self, request: ChatRequest, candidates: Sequence[str]
    ) -> CandidateLogProbs:
        _check_candidates(candidates)
        if not self.supports_logprobs:
            raise CapabilityError(
                "backend is configured without log-probability support; "
                "enable it only for endpoints that honor top_logprobs"
            )
        payload = self._payload(request)
        payload.update({"max_tokens": 1, "logprobs": True, "top_logprobs": self.top_logprobs})
        try:
            body = self._post(payload)
            try:
                reported = body["choices"][0]["logprobs"]["content"][0]["top_logprobs"]
            except (KeyError, IndexError, TypeError) as exc:
                raise MalformedResponseError(f"logprobs response missing fields: {exc}") from exc
            found: dict[str, float] = {}
            wanted = set(candidates)
            try:
                for item in reported:
                    token = str(item["token"]).strip()
                    if token in wanted and token not in found:
                        found[token] = min(float(item["logprob"]), 0.0)
            except (KeyError, TypeError, ValueError) as exc:
                raise MalformedResponseError(f"logprobs entries malformed: {exc}") from exc
        except BackendError as exc:
            self._record(BackendCall("logprobs", request, error=str(exc)))
            raise
        result = _fill_candidates(found, candidates, self.logprob_floor)
        self._record(BackendCall("logprobs", request, response=result))
        return result


def load_scripted_backend(entries: Sequence[dict], **kwargs) -> ScriptedBackend:
    """Build a `ScriptedBackend` from a list of script entries.

    Entry shapes:
      {"kind": "chat", "text": "...", "tag": optional, "finish_reason": optional}
      {"kind": "logprobs", "values": {"Yes": -0.1, ...}, "tag": optional}
      {"kind": "error", "message": "...", "tag": optional, "call": "chat" | "logprobs"}
    """
    backend = ScriptedBackend(**kwargs)
    for position, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise ConfigError(f"script entry {position} must be an object")
        kind = entry.get("kind")
        tag = entry.get("tag")
        if kind == "chat":
            text = entry.get("text")
            if not isinstance(text, str):
                raise ConfigError(f"script entry {position}: chat entries need a string `text`")
            backend.script_chat(text, tag=tag, finish_reason=entry.get("finish_reason"))
        elif kind == "logprobs":
            values = entry.get("values")
            if not isinstance(values, dict):
                raise ConfigError(f"script entry {position}: logprobs entries need a `values` object")
            backend.script_logprobs({str(k): float(v) for k, v in values.items()}, tag=tag)
        elif kind == "error":
            message = entry.get("message", "scripted backend failure")
            if entry.get("call") == "logprobs":
                backend.script_logprob_error(message, tag=tag)
            else:
                backend.script_chat_error(message, tag=tag)
        else:
            raise ConfigError(f"script entry {position}: unknown kind {kind!r}")
    return backend


def load_mock_script(path: str | Path) -> dict[str, ScriptedBackend]:
    """Load a mock script file into per-role scripted backends.

    The file holds either a bare list of entries (pipeline role only) or an
    object with `pipeline` and optional `judge` entry lists.
    """
    path = Path(path)
    try:
        data = json.loads(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read mock script {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"mock script {path} is not valid JSON: {exc.msg}") from exc
    if isinstance(data, list):
        sections = {"pipeline": data}
    elif isinstance(data, dict):
        sections = data
    else:
        raise ConfigError(f"mock script {path} must be a list or object")
    backends: dict[str, ScriptedBackend] = {}
    for role, entries in sections.items():
        if role not in ("pipeline", "judge"):
            raise ConfigError(f"mock script {path}: unknown section {role!r}")
        if not isinstance(entries, list):
            raise ConfigError(f"mock script {path}: section {role!r} must be a list")
        backends[role] = load_scripted_backend(entries)
    if "pipeline" not in backends:
        raise ConfigError(f"mock script {path} must define a `pipeline` section")
    return backends
