"""Shared fixtures: a small corpus, indexes, and an HTTP stub server."""
from __future__ import annotations

import json
import threading
from collections import deque
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from citeqa import (
    Document,
    DocumentStore,
    LocalHashEmbedding,
    build_dense_index,
    build_sparse_index,
)

TINY_TEXTS = (
    "the solar panel converts sunlight into electricity",
    "wind turbines generate power from moving air",
    "hydroelectric dams store potential energy in water",
    "geothermal plants tap heat from under the ground",
    "batteries store electricity for later use at night",
    "pumped storage reservoirs hold water for peak demand",
)


def make_store() -> DocumentStore:
    return DocumentStore(
        Document(id=f"d{i}", text=text, title=f"Entry {i}")
        for i, text in enumerate(TINY_TEXTS)
    )


@pytest.fixture()
def store() -> DocumentStore:
    return make_store()


@pytest.fixture(scope="session")
def provider() -> LocalHashEmbedding:
    return LocalHashEmbedding(dimension=64)


@pytest.fixture()
def indexes(store, provider):
    return build_sparse_index(store), build_dense_index(store, provider)


class StubServer:
    """Replays queued (status, body) responses and records every request."""

    def __init__(self):
        self.responses: deque[tuple[int, str]] = deque()
        self.requests: list[dict] = []
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), self._handler())
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    @property
    def url(self) -> str:
        host, port = self._httpd.server_address
        return f"http://{host}:{port}/v1/endpoint"

    def queue_json(self, payload: dict, status: int = 200) -> None:
        self.responses.append((status, json.dumps(payload)))

    def queue_raw(self, body: str, status: int = 200) -> None:
        self.responses.append((status, body))

    def queue_chat(self, text: str, finish_reason: str = "stop") -> None:
        self.queue_json(
            {"choices": [{"message": {"content": text}, "finish_reason": finish_reason}]}
        )

    def close(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        self._thread.join(timeout=5)

    def _handler(self):
        stub = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self):  # noqa: N802 (stdlib naming)
                length = int(self.headers.get("Content-Length", 0))
                raw = self.rfile.read(length)
                stub.requests.append(
                    {
                        "path": self.path,
                        "authorization": self.headers.get("Authorization"),
                        "body": json.loads(raw) if raw else None,
                    }
                )
                status, text = stub.responses.popleft() if stub.responses else (599, "{}")
                data = text.encode("utf-8")
                self.send_response(status)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(data)))
                self.end_headers()
                self.wfile.write(data)

            def log_message(self, *args):
                pass

        return Handler


@pytest.fixture()
def stub_server():
    server = StubServer()
    yield server
    server.close()
