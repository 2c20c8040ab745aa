"""HTTP client for chat-completion and embedding endpoints.

One gateway instance owns the transport concerns the rest of the package
should never think about: retries with backoff, bounded in-flight requests,
the on-disk embedding cache, and batching of embedding calls. Judging and
blocking code talk to ``chat``/``embed`` and stay free of HTTP details.

The wire protocol is the common chat-completions/embeddings JSON shape, so
the gateway works unchanged against any compatible endpoint, including the
in-process mock server used by the tests.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import requests

from .embeddings import Vector
from .errors import TransportError
from .tokens import Tokenizer, count_tokens

logger = logging.getLogger(__name__)

API_KEY_ENV = "STORYALIGN_API_KEY"


@dataclass
class GatewayConfig:
    """Connection and policy settings for a model endpoint."""

    base_url: str
    embed_model: str = "embed-small"
    chat_model: str = "chat-small"
    api_key: str | None = None
    timeout: float = 30.0
    retry_limit: int = 3
    retry_backoff: float = 0.5
    max_in_flight: int = 4
    embed_batch_size: int = 64
    cache_dir: str | Path | None = None

    def __post_init__(self) -> None:
        if self.api_key is None:
            self.api_key = os.environ.get(API_KEY_ENV)
        if self.retry_limit < 0:
            raise ValueError("retry_limit must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.embed_batch_size < 1:
            raise ValueError("embed_batch_size must be >= 1")


@dataclass
class GatewayStats:
    requests_sent: int = 0
    retries: int = 0
    cache_hits: int = 0
    cache_misses: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0


class EmbeddingCache:
    """Embedding store keyed by (model id, sha256 of the text).

    Entries live in memory and, when a directory is configured, as one JSON
    file each under ``<dir>/<model>/<digest>.json``. Writes go through a
    temp file and rename so a crash never leaves a torn entry behind.
    """

    def __init__(self, cache_dir: str | Path | None = None):
        self._dir = Path(cache_dir) if cache_dir is not None else None
        self._memory: dict[tuple[str, str], Vector] = {}
        self._lock = threading.Lock()

    @staticmethod
    def digest(text: str) -> str:
        import hashlib

        return hashlib.sha256(text.encode("utf-8")).hexdigest()

    def _path(self, model: str, digest: str) -> Path:
        assert self._dir is not None
        safe_model = re.sub(r"[^A-Za-z0-9._-]", "_", model)
        return self._dir / safe_model / f"{digest}.json"

    def get(self, model: str, text: str) -> Vector | None:
        digest = self.digest(text)
        with self._lock:
            hit = self._memory.get((model, digest))
        if hit is not None:
            return hit
        if self._dir is None:
            return None
        path = self._path(model, digest)
        if not path.exists():
            return None
        try:
            payload = json.loads(path.read_text(encoding="utf-8"))
            vector = tuple(float(v) for v in payload["vector"])
        except (json.JSONDecodeError, KeyError, TypeError, ValueError):
            logger.warning("dropping unreadable cache entry %s", path)
            return None
        with self._lock:
            self._memory[(model, digest)] = vector
        return vector

    def put(self, model: str, text: str, vector: Sequence[float]) -> None:
        digest = self.digest(text)
        stored = tuple(float(v) for v in vector)
        with self._lock:
            self._memory[(model, digest)] = stored
        if self._dir is None:
            return
        path = self._path(model, digest)
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(
            json.dumps({"model": model, "digest": digest, "vector": list(stored)}),
            encoding="utf-8",
        )
        tmp.replace(path)


class ModelGateway:
    """Client for one model endpoint; safe to share across threads."""

    def __init__(self, config: GatewayConfig, tokenizer: Tokenizer | None = None):
        self.config = config
        self.stats = GatewayStats()
        self._tokenizer = tokenizer
        self._cache = EmbeddingCache(config.cache_dir)
        self._session = requests.Session()
        self._semaphore = threading.BoundedSemaphore(config.max_in_flight)
        self._stats_lock = threading.Lock()
        self._embed_dim: int | None = None

    # -- public API --------------------------------------------------------

    def count_tokens(self, text: str) -> int:
        return count_tokens(text, self._tokenizer)

    def embed(self, texts: Sequence[str]) -> list[Vector]:
        """Embed ``texts`` in input order; cached texts cost no requests."""
        results: dict[int, Vector] = {}
        pending: dict[str, list[int]] = {}
        for i, text in enumerate(texts):
            cached = self._cache.get(self.config.embed_model, text)
            if cached is not None:
                results[i] = cached
                self._bump(cache_hits=1)
            else:
                pending.setdefault(text, []).append(i)
                self._bump(cache_misses=1)

        unique_texts = list(pending)
        batch_size = self.config.embed_batch_size
        for offset in range(0, len(unique_texts), batch_size):
            batch = unique_texts[offset : offset + batch_size]
            payload = {"model": self.config.embed_model, "input": batch}
            body = self._post_json("/v1/embeddings", payload)
            vectors = self._unpack_embeddings(body, expected=len(batch))
            for text, vector in zip(batch, vectors):
                self._cache.put(self.config.embed_model, text, vector)
                for index in pending[text]:
                    results[index] = vector
        return [results[i] for i in range(len(texts))]

    def embed_by_id(self, texts_by_id: Mapping[str, str]) -> dict[str, Vector]:
        ids = list(texts_by_id)
        vectors = self.embed([texts_by_id[i] for i in ids])
        return dict(zip(ids, vectors))

    def chat(
        self,
        system_prompt: str,
        user_prompt: str,
        temperature: float = 0.0,
        max_tokens: int | None = None,
        seed: int | None = None,
    ) -> str:
        payload: dict = {
            "model": self.config.chat_model,
            "messages": [
                {"role": "system", "content": system_prompt},
                {"role": "user", "content": user_prompt},
            ],
            "temperature": temperature,
        }
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        if seed is not None:
            payload["seed"] = seed
        body = self._post_json("/v1/chat/completions", payload)
        usage = body.get("usage", {})
        self._bump(
            prompt_tokens=int(usage.get("prompt_tokens", 0)),
            completion_tokens=int(usage.get("completion_tokens", 0)),
        )
        try:
            choices = {c.get("index", i): c for i, c in enumerate(body["choices"])}
            return str(choices[0]["message"]["content"])
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportError(f"malformed chat response: {body!r}") from exc

    # -- internals ---------------------------------------------------------

    def _bump(self, **deltas: int) -> None:
        with self._stats_lock:
            for name, delta in deltas.items():
                setattr(self.stats, name, getattr(self.stats, name) + delta)

    def _unpack_embeddings(self, body: dict, expected: int) -> list[Vector]:
        try:
            items = body["data"]
            ordered: list[Vector | None] = [None] * expected
            for item in items:
                ordered[int(item["index"])] = tuple(float(v) for v in item["embedding"])
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise TransportError(f"malformed embeddings response: {body!r}") from exc
        if any(v is None for v in ordered):
            raise TransportError("embeddings response is missing indices")
        vectors = [v for v in ordered if v is not None]
        for vector in vectors:
            if self._embed_dim is None:
                self._embed_dim = len(vector)
            elif len(vector) != self._embed_dim:
                raise TransportError(
                    f"embedding dimension changed mid-stream: expected "
                    f"{self._embed_dim}, got {len(vector)}"
                )
        return vectors

    def _post_json(self, path: str, payload: dict) -> dict:
        url = self.config.base_url.rstrip("/") + path
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        last_error: str = "no attempts made"
        for attempt in range(self.config.retry_limit + 1):
            if attempt > 0:
                self._bump(retries=1)
                time.sleep(self.config.retry_backoff * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    self._bump(requests_sent=1)
                    response = self._session.post(
                        url, json=payload, headers=headers, timeout=self.config.timeout
                    )
            except requests.RequestException as exc:
                last_error = f"{type(exc).__name__}: {exc}"
                logger.warning("request to %s failed (%s), attempt %d", url, last_error, attempt)
                continue
            if response.status_code >= 500:
                last_error = f"HTTP {response.status_code}"
                logger.warning("server error from %s (%s), attempt %d", url, last_error, attempt)
                continue
            if response.status_code >= 400:
                raise TransportError(
                    f"{url} rejected the request: HTTP {response.status_code} "
                    f"{response.text[:200]}"
                )
            try:
                return response.json()
            except ValueError:
                last_error = "response body is not JSON"
                continue
        raise TransportError(
            f"{url} unreachable after {self.config.retry_limit + 1} attempts ({last_error})"
        )
