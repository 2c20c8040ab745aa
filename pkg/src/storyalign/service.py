"""HTTP front end for annotation sessions.

One service instance serves one corpus (chunks + stories + frozen
embeddings). Sessions are created over it, journaled under a sessions
directory, and can be resumed by id after a restart. Error bodies are
always ``{"code", "message", "detail"}``.
"""

from __future__ import annotations

import io as _io
import logging
import uuid
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, PlainTextResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel, Field

from .annotation import AnnotationSession, create_session, load_session
from .corpus import Chunk, Transcript, UserStory
from .embeddings import Vector
from .errors import DataError
from .io import LABELS_HEADER

logger = logging.getLogger(__name__)


class NotFoundError(Exception):
    pass


class AnnotationService:
    """Session registry over one fixed corpus."""

    def __init__(
        self,
        chunks: Sequence[Chunk],
        stories: Sequence[UserStory],
        embeddings: Mapping[str, Vector],
        sessions_dir: str | Path,
        transcripts: Sequence[Transcript] = (),
    ):
        if not chunks:
            raise DataError("service needs at least one chunk")
        if not stories:
            raise DataError("service needs at least one story")
        self.chunks = list(chunks)
        self.stories = list(stories)
        self.embeddings = dict(embeddings)
        self.transcripts = list(transcripts)
        self.sessions_dir = Path(sessions_dir)
        self.sessions_dir.mkdir(parents=True, exist_ok=True)
        self._sessions: dict[str, AnnotationSession] = {}

    def _journal_path(self, session_id: str) -> Path:
        return self.sessions_dir / f"{session_id}.jsonl"

    def create(
        self,
        annotator: str,
        phase1_target: int = 5,
        required_positives: int = 2,
    ) -> AnnotationSession:
        session_id = uuid.uuid4().hex[:12]
        session = create_session(
            self.chunks,
            self.stories,
            self.embeddings,
            self._journal_path(session_id),
            annotator=annotator,
            session_id=session_id,
            transcripts=self.transcripts,
            phase1_target=phase1_target,
            required_positives=required_positives,
        )
        self._sessions[session_id] = session
        return session

    def get(self, session_id: str) -> AnnotationSession:
        session = self._sessions.get(session_id)
        if session is not None:
            return session
        path = self._journal_path(session_id)
        if not path.exists():
            raise NotFoundError(f"no session {session_id!r}")
        session = load_session(path)
        self._sessions[session_id] = session
        return session

    def list_sessions(self) -> list[dict[str, Any]]:
        out = []
        for path in sorted(self.sessions_dir.glob("*.jsonl")):
            if path.name.startswith("."):
                continue
            session_id = path.stem
            try:
                session = self.get(session_id)
            except (DataError, NotFoundError):
                logger.warning("skipping unreadable session journal %s", path)
                continue
            out.append(
                {
                    "session_id": session.session_id,
                    "annotator": session.annotator,
                    "story_count": len(session.stories),
                }
            )
        return out

    def close(self) -> None:
        for session in self._sessions.values():
            session.close()
        self._sessions.clear()


class CreateSessionBody(BaseModel):
    annotator: str = Field(min_length=1)
    phase1_target: int = 5
    required_positives: int = 2


class LabelBody(BaseModel):
    story_id: str
    chunk_id: str
    label: int
    amend: bool = False


class PinBody(BaseModel):
    story_id: str
    chunk_id: str


def _chunk_json(chunk: Chunk) -> dict[str, Any]:
    return {
        "id": chunk.id,
        "transcript_id": chunk.transcript_id,
        "span_start": chunk.span_start,
        "span_end": chunk.span_end,
        "text": chunk.text,
        "token_count": chunk.token_count,
        "strategy": chunk.strategy,
    }


def build_app(service: AnnotationService, static_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="storyalign annotation service")

    @app.exception_handler(DataError)
    async def data_error_handler(request: Request, exc: DataError):
        return JSONResponse(
            status_code=400,
            content={"code": "data_error", "message": str(exc), "detail": None},
        )

    @app.exception_handler(NotFoundError)
    async def not_found_handler(request: Request, exc: NotFoundError):
        return JSONResponse(
            status_code=404,
            content={"code": "not_found", "message": str(exc), "detail": None},
        )

    @app.exception_handler(RequestValidationError)
    async def validation_handler(request: Request, exc: RequestValidationError):
        return JSONResponse(
            status_code=422,
            content={
                "code": "invalid_request",
                "message": "request body failed validation",
                "detail": exc.errors(),
            },
        )

    @app.get("/health")
    def health() -> dict[str, Any]:
        return {
            "status": "ok",
            "chunks": len(service.chunks),
            "stories": len(service.stories),
        }

    @app.get("/sessions")
    def list_sessions() -> dict[str, Any]:
        return {"sessions": service.list_sessions()}

    @app.post("/sessions", status_code=201)
    def create(body: CreateSessionBody) -> dict[str, Any]:
        session = service.create(
            annotator=body.annotator,
            phase1_target=body.phase1_target,
            required_positives=body.required_positives,
        )
        return session.progress()

    @app.get("/sessions/{session_id}")
    def progress(session_id: str) -> dict[str, Any]:
        return service.get(session_id).progress()

    @app.get("/sessions/{session_id}/stories")
    def stories(session_id: str) -> dict[str, Any]:
        session = service.get(session_id)
        return {
            "stories": [
                {
                    "id": story.id,
                    "text": story.text,
                    **session.story_status(story.id),
                }
                for story in session.stories.values()
            ]
        }

    @app.get("/sessions/{session_id}/stories/{story_id}/candidates")
    def candidates(session_id: str, story_id: str) -> dict[str, Any]:
        session = service.get(session_id)
        status = session.story_status(story_id)
        payload = []
        for chunk_id in status["pending"]:
            chunk = session.chunks[chunk_id]
            payload.append(
                {
                    "chunk": _chunk_json(chunk),
                    "context": session.context_turns(chunk_id),
                    "pinned": chunk_id in session.states[story_id].pending_pins,
                }
            )
        story = session.stories[story_id]
        return {
            "story": {"id": story.id, "text": story.text},
            "phase": status["phase"],
            "labeled": status["labeled"],
            "positives": status["positives"],
            "candidates": payload,
        }

    @app.post("/sessions/{session_id}/labels")
    def label(session_id: str, body: LabelBody) -> dict[str, Any]:
        session = service.get(session_id)
        return session.record_label(
            body.story_id, body.chunk_id, body.label, amend=body.amend
        )

    @app.post("/sessions/{session_id}/pins")
    def pin(session_id: str, body: PinBody) -> dict[str, Any]:
        session = service.get(session_id)
        return session.record_pin(body.story_id, body.chunk_id)

    @app.get("/sessions/{session_id}/chunks")
    def chunks(session_id: str, q: str = "", limit: int = 20) -> dict[str, Any]:
        session = service.get(session_id)
        return {
            "chunks": [
                _chunk_json(chunk) for chunk in session.search_chunks(q, limit)
            ]
        }

    @app.get("/sessions/{session_id}/export")
    def export(session_id: str) -> PlainTextResponse:
        session = service.get(session_id)
        labels = session.export_labels()
        buffer = _io.StringIO()
        buffer.write(",".join(LABELS_HEADER) + "\n")
        for chunk_id, story_id in sorted(labels, key=lambda p: (p[1], p[0])):
            buffer.write(f"{story_id},{chunk_id},{labels[(chunk_id, story_id)]}\n")
        return PlainTextResponse(buffer.getvalue(), media_type="text/csv")

    if static_dir is not None:
        app.mount("/", StaticFiles(directory=str(static_dir), html=True), name="ui")

    return app


def hash_embedder(dim: int = 64) -> Callable[[str], Vector]:
    from .embeddings import hash_embedding

    return lambda text: hash_embedding(text, dim=dim)


def embed_corpus(
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    embed: Callable[[str], Vector],
) -> dict[str, Vector]:
    """One embedding per chunk and story id, from any text->vector callable."""
    table: dict[str, Vector] = {}
    for chunk in chunks:
        table[chunk.id] = embed(chunk.text)
    for story in stories:
        if story.id in table:
            raise DataError(f"story id {story.id!r} collides with a chunk id")
        table[story.id] = embed(story.text)
    return table
