"""HTTP layer: the provider wire protocol over a loaded inference engine.

Endpoints::

    POST /fill_mask         {"masked_text", "top_k"}        -> {"candidates": [...]}
    POST /score             {"prompt", "continuation"}      -> {"perplexity"}
    POST /score             {"prompt", "options": [...]}    -> {"option_probs": [...]}
    POST /generate          {"prompt", "max_answer_tokens"} -> {"answer_text"}
    POST /<op>_batch        {"queries": [...]}              -> {"results": [...]}
    GET  /healthz           -> {"status": "ok", ...}

Failures carry ``{"error": {"code", "message"}}`` with HTTP 400 for bad
requests and 500 for model errors.  The HTTP server accepts concurrent
connections; model access is serialized through a lock, so requests queue
rather than contend.  An ``X-Request-Id`` header, when present, is echoed
back for correlation.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

from .engine import InferenceEngine, RequestError

log = logging.getLogger("ctxeval_sidecar")


def _error(code: str, message: str) -> dict:
    return {"error": {"code": code, "message": message}}


class SidecarServer:
    def __init__(self, engine: InferenceEngine, host: str = "127.0.0.1", port: int | None = None):
        self.engine = engine
        self._lock = threading.Lock()
        bind_port = engine.config.port if port is None else port
        self._httpd = ThreadingHTTPServer((host, bind_port), self._make_handler())
        self._thread: threading.Thread | None = None

    @property
    def base_url(self) -> str:
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    def start(self) -> "SidecarServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        log.info("sidecar listening on %s", self.base_url)
        return self

    def serve_forever(self) -> None:
        log.info("sidecar listening on %s", self.base_url)
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)

    def __enter__(self) -> "SidecarServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.stop()

    # --- request handling -------------------------------------------------

    def _make_handler(self):
        server = self

        class Handler(BaseHTTPRequestHandler):
            protocol_version = "HTTP/1.1"

            def log_message(self, *args):
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
                    self._reply(200, {
                        "status": "ok",
                        "fill_model": server.engine.config.fill_model,
                        "gen_model": server.engine.config.gen_model,
                    })
                else:
                    self._reply(404, _error("protocol", f"no route {self.path}"))

            def do_POST(self):
                try:
                    length = int(self.headers.get("Content-Length", 0))
                    body = json.loads(self.rfile.read(length) or b"{}")
                    if not isinstance(body, dict):
                        raise ValueError("request body must be a JSON object")
                except (ValueError, json.JSONDecodeError) as exc:
                    self._reply(400, _error("protocol", f"bad request body: {exc}"))
                    return
                try:
                    result = server._dispatch(self.path, body)
                except RequestError as exc:
                    self._reply(400, _error(exc.code, str(exc)))
                except Exception as exc:
                    log.exception("request failed")
                    self._reply(500, _error("internal", str(exc)))
                else:
                    self._reply(200, result)

        return Handler

    def _dispatch(self, path: str, body: dict) -> dict:
        if path.endswith("_batch"):
            queries = body.get("queries")
            if not isinstance(queries, list):
                raise RequestError("protocol", "batch request must carry a 'queries' list")
            if len(queries) > self.engine.config.max_batch:
                raise RequestError(
                    "protocol",
                    f"batch of {len(queries)} exceeds max_batch {self.engine.config.max_batch}",
                )
            op = path[: -len("_batch")]
            return {"results": [self._single(op, q) for q in queries]}
        return self._single(path, body)

    def _single(self, op: str, body: dict) -> dict:
        with self._lock:
            if op == "/fill_mask":
                candidates = self.engine.fill_mask(
                    str(body.get("masked_text", "")), int(body.get("top_k", 10))
                )
                return {"candidates": candidates}
            if op == "/score":
                prompt = str(body.get("prompt", ""))
                has_continuation = "continuation" in body
                has_options = "options" in body
                if has_continuation == has_options:
                    raise RequestError(
                        "mode_mismatch",
                        "score request must set exactly one of continuation / options",
                    )
                if has_continuation:
                    perplexity = self.engine.score_continuation(
                        prompt, str(body["continuation"])
                    )
                    return {"perplexity": perplexity}
                options = body["options"]
                if not isinstance(options, list) or not options:
                    raise RequestError("mode_mismatch", "options must be a non-empty list")
                probs = self.engine.score_options(prompt, [str(o) for o in options])
                return {"option_probs": probs}
            if op == "/generate":
                answer = self.engine.generate(
                    str(body.get("prompt", "")), int(body.get("max_answer_tokens", 32))
                )
                return {"answer_text": answer}
            raise RequestError("protocol", f"no route {op}")
