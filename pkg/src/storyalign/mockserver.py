"""Deterministic in-process model server for tests and offline runs.

Speaks the same chat-completions/embeddings wire shape the gateway expects,
plus a ``/score`` endpoint for the external-scorer matcher. Nothing here is
random: embeddings come from hashed bags of words (or an explicit per-text
table), and chat responses come from either a scripted list or a
keyword-overlap rule. A probe endpoint exposes request counts and the
maximum number of concurrently served requests, which is how the tests
verify the gateway's in-flight bound.
"""

from __future__ import annotations

import hashlib
import json
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Sequence

from .embeddings import hash_embedding
from .tokens import content_words

_JUDGE_FIELDS_RE = re.compile(r"User Story:(.*?)Chunk Text:(.*?)Answer:", re.DOTALL)


class MockModelServer:
    """Scriptable stand-in for a model endpoint.

    chat_mode:
      * ``keyword``: answer "1" iff story and chunk (parsed from the judge
        prompt) share at least ``keyword_min_shared`` content words.
      * ``script``: pop the next canned response; a drained script is a
        hard 500 so tests notice extra calls instead of silently passing.
      * ``echo``: deterministic digest of the user prompt, for cache and
        plumbing tests that only care about stability.
    """

    def __init__(
        self,
        *,
        chat_mode: str = "keyword",
        chat_script: Sequence[str] | None = None,
        keyword_min_shared: int = 2,
        embed_dim: int = 16,
        embed_table: dict[str, Sequence[float]] | None = None,
        ragged_embeddings: bool = False,
        delay_seconds: float = 0.0,
    ):
        if chat_mode not in {"keyword", "script", "echo"}:
            raise ValueError(f"unknown chat_mode {chat_mode!r}")
        self.chat_mode = chat_mode
        self.chat_script = list(chat_script or [])
        self.keyword_min_shared = keyword_min_shared
        self.embed_dim = embed_dim
        self.embed_table = dict(embed_table or {})
        self.ragged_embeddings = ragged_embeddings
        self.delay_seconds = delay_seconds
        self.fail_next_requests = 0

        self._lock = threading.Lock()
        self._inflight = 0
        self.max_concurrent = 0
        self.requests_total = 0
        self.requests_by_path: dict[str, int] = {}

        self._httpd: ThreadingHTTPServer | None = None
        self._thread: threading.Thread | None = None

    # -- lifecycle ---------------------------------------------------------

    def start(self) -> "MockModelServer":
        handler = _build_handler(self)
        self._httpd = ThreadingHTTPServer(("127.0.0.1", 0), handler)
        self._httpd.daemon_threads = True
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def close(self) -> None:
        if self._httpd is not None:
            self._httpd.shutdown()
            self._httpd.server_close()
            self._httpd = None

    def __enter__(self) -> "MockModelServer":
        return self.start()

    def __exit__(self, *exc_info) -> None:
        self.close()

    @property
    def url(self) -> str:
        assert self._httpd is not None, "server is not running"
        host, port = self._httpd.server_address[:2]
        return f"http://{host}:{port}"

    # -- bookkeeping -------------------------------------------------------

    def reset_probe(self) -> None:
        with self._lock:
            self.max_concurrent = 0
            self.requests_total = 0
            self.requests_by_path = {}

    def probe(self) -> dict:
        with self._lock:
            return {
                "requests_total": self.requests_total,
                "max_concurrent": self.max_concurrent,
                "by_path": dict(self.requests_by_path),
            }

    def _enter_request(self, path: str) -> None:
        with self._lock:
            self._inflight += 1
            self.max_concurrent = max(self.max_concurrent, self._inflight)
            self.requests_total += 1
            self.requests_by_path[path] = self.requests_by_path.get(path, 0) + 1

    def _leave_request(self) -> None:
        with self._lock:
            self._inflight -= 1

    def _take_failure(self) -> bool:
        with self._lock:
            if self.fail_next_requests > 0:
                self.fail_next_requests -= 1
                return True
        return False

    # -- response logic ----------------------------------------------------

    def _embedding_for(self, text: str, position: int) -> list[float]:
        if text in self.embed_table:
            return [float(v) for v in self.embed_table[text]]
        dim = self.embed_dim + (position % 2 if self.ragged_embeddings else 0)
        return list(hash_embedding(text, dim))

    def handle_embeddings(self, payload: dict) -> dict:
        inputs = payload.get("input", [])
        if isinstance(inputs, str):
            inputs = [inputs]
        data = [
            {
                "object": "embedding",
                "index": i,
                "embedding": self._embedding_for(text, i),
            }
            for i, text in enumerate(inputs)
        ]
        total_tokens = sum(len(str(t).split()) for t in inputs)
        return {
            "object": "list",
            "data": data,
            "model": payload.get("model", "mock-embed"),
            "usage": {"prompt_tokens": total_tokens, "total_tokens": total_tokens},
        }

    def handle_chat(self, payload: dict) -> tuple[int, dict]:
        messages = payload.get("messages", [])
        user_prompt = ""
        for message in messages:
            if message.get("role") == "user":
                user_prompt = str(message.get("content", ""))
        if self.chat_mode == "script":
            with self._lock:
                if not self.chat_script:
                    return 500, {"error": "chat script exhausted"}
                content = self.chat_script.pop(0)
        elif self.chat_mode == "keyword":
            content = self._keyword_answer(user_prompt)
        else:
            digest = hashlib.sha256(user_prompt.encode("utf-8")).hexdigest()[:12]
            content = f"echo:{digest}"
        prompt_tokens = sum(len(str(m.get("content", "")).split()) for m in messages)
        body = {
            "id": "mock-chat",
            "object": "chat.completion",
            "model": payload.get("model", "mock-chat"),
            "choices": [
                {
                    "index": 0,
                    "message": {"role": "assistant", "content": content},
                    "finish_reason": "stop",
                }
            ],
            "usage": {
                "prompt_tokens": prompt_tokens,
                "completion_tokens": len(content.split()),
                "total_tokens": prompt_tokens + len(content.split()),
            },
        }
        return 200, body

    def _keyword_answer(self, user_prompt: str) -> str:
        match = _JUDGE_FIELDS_RE.search(user_prompt)
        if match is None:
            return "0"
        story, chunk = match.group(1), match.group(2)
        shared = content_words(story) & content_words(chunk)
        return "1" if len(shared) >= self.keyword_min_shared else "0"

    def handle_score(self, payload: dict) -> dict:
        scores = []
        for pair in payload.get("pairs", []):
            story_words = content_words(str(pair.get("story", "")))
            chunk_words = content_words(str(pair.get("chunk", "")))
            union = story_words | chunk_words
            scores.append(len(story_words & chunk_words) / len(union) if union else 0.0)
        return {"scores": scores}


def _build_handler(server: MockModelServer):
    class Handler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, *args) -> None:  # noqa: ARG002 - keep tests quiet
            pass

        def _send(self, status: int, body: dict) -> None:
            raw = json.dumps(body).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(raw)))
            self.end_headers()
            self.wfile.write(raw)

        def do_GET(self) -> None:
            server._enter_request(self.path)
            try:
                if self.path == "/probe":
                    payload = server.probe()
                    payload["max_concurrent"] = server.max_concurrent
                    self._send(200, payload)
                elif self.path == "/health":
                    self._send(200, {"status": "ok"})
                else:
                    self._send(404, {"error": f"no route {self.path}"})
            finally:
                server._leave_request()

        def do_POST(self) -> None:
            server._enter_request(self.path)
            try:
                # Drain the body first: on keep-alive connections an unread
                # body would be misparsed as the next request line.
                length = int(self.headers.get("Content-Length", "0"))
                raw_body = self.rfile.read(length)
                if server.delay_seconds > 0:
                    time.sleep(server.delay_seconds)
                if server._take_failure():
                    self._send(500, {"error": "injected failure"})
                    return
                try:
                    payload = json.loads(raw_body or b"{}")
                except json.JSONDecodeError:
                    self._send(400, {"error": "request body is not JSON"})
                    return
                if self.path == "/v1/embeddings":
                    self._send(200, server.handle_embeddings(payload))
                elif self.path == "/v1/chat/completions":
                    status, body = server.handle_chat(payload)
                    self._send(status, body)
                elif self.path == "/score":
                    self._send(200, server.handle_score(payload))
                else:
                    self._send(404, {"error": f"no route {self.path}"})
            finally:
                server._leave_request()

    return Handler
