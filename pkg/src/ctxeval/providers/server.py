"""Serve any in-process provider over the wire protocol.

This is plumbing for contract tests and offline pipelines: it lets the
HTTP client, and any external implementation of the protocol, be checked
against the same behavioral suite as the deterministic mocks.  Requests
are handled on a thread pool by ``ThreadingHTTPServer``; the provider call
itself is serialized through a lock so providers need not be thread-safe.
"""

from __future__ import annotations

import json
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .base import (
    BadMask,
    FillMaskQuery,
    GenerateQuery,
    ModeMismatch,
    Provider,
    ProviderError,
    ProtocolError,
)
from .http import score_query_from_wire


def _error_body(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


_ERROR_STATUS = {
    BadMask: (400, "bad_mask"),
    ModeMismatch: (400, "mode_mismatch"),
    ProtocolError: (400, "protocol"),
}


class ProviderHTTPServer:
    """Bind a provider to a local HTTP port; ``with`` or start/stop lifecycle."""

    def __init__(self, provider: Provider, host: str = "127.0.0.1", port: int = 0):
        self.provider = provider
        self._lock = threading.Lock()
        handler = self._make_handler()
        self._httpd = ThreadingHTTPServer((host, port), handler)
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "ProviderHTTPServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "ProviderHTTPServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):  # keep test output quiet
                pass

            def _reply(self, status: int, body: dict):
                payload = json.dumps(body).encode("utf-8")
                self.send_response(status)
                request_id = self.headers.get("X-Request-Id")
                if request_id:
                    self.send_header("X-Request-Id", request_id)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def do_GET(self):
                if self.path == "/healthz":
                    self._reply(200, {"status": "ok", "model_id": server.provider.model_id})
                else:
                    self._reply(404, _error_body("protocol", f"no route {self.path}"))

            def do_POST(self):
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                except (ValueError, json.JSONDecodeError) as exc:
                    self._reply(400, _error_body("protocol", f"bad request body: {exc}"))
                    return
                try:
                    result = server._dispatch(self.path, body)
                except ProviderError as exc:
                    status, code = _ERROR_STATUS.get(type(exc), (500, "internal"))
                    self._reply(status, _error_body(code, str(exc)))
                except Exception as exc:  # pragma: no cover - defensive
                    self._reply(500, _error_body("internal", str(exc)))
                else:
                    self._reply(200, result)

        return Handler

    def _dispatch(self, path: str, body: dict) -> dict:
        if path.endswith("_batch"):
            queries = body.get("queries")
            if not isinstance(queries, list):
                raise ProtocolError("batch request must carry a 'queries' list")
            op = path[: -len("_batch")]
            return {"results": [self._single(op, q) for q in queries]}
        return self._single(path, body)

    def _single(self, op: str, body: dict) -> dict:
        with self._lock:
            if op == "/fill_mask":
                query = FillMaskQuery(
                    masked_text=body.get("masked_text", ""),
                    top_k=int(body.get("top_k", 10)),
                )
                candidates = self.provider.fill_mask(query)
                return {
                    "candidates": [{"text": c.text, "score": c.score} for c in candidates]
                }
            if op == "/score":
                result = self.provider.score(score_query_from_wire(body))
                if result.perplexity is not None:
                    return {"perplexity": result.perplexity}
                return {"option_probs": list(result.option_probs)}
            if op == "/generate":
                query = GenerateQuery(
                    prompt=body.get("prompt", ""),
                    max_answer_tokens=int(body.get("max_answer_tokens", 32)),
                )
                return {"answer_text": self.provider.generate(query).answer_text}
            raise ProtocolError(f"no route {op}")
