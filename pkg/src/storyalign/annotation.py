"""Human labeling sessions over ranked candidate pairs.

A session freezes one similarity ranking per story at creation time, then
walks an annotator through it:

* phase 1 offers up to five non-overlapping candidates per story;
* once five labels are in, stories short of two positive labels get
  extension candidates one at a time until the ranking runs dry;
* the annotator can pin any chunk (found by search, say) to the front of
  a story's queue; pins skip the overlap filter but their labels count
  like any other.

Every event is appended to a per-session JSONL journal and fsync'd before
the call returns, so a crashed session reloads to the exact same state.
The "open" event snapshots chunks, stories, and rankings; a journal is a
complete, self-contained record of the session.
"""

from __future__ import annotations

import datetime as _dt
import json
import os
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence, TextIO

from .alignment import Pair
from .blocking import rank_chunk_indices
from .chunking import chunks_overlap
from .corpus import Chunk, Transcript, Turn, UserStory
from .embeddings import Vector
from .errors import DataError
from .metrics import fleiss_kappa

PHASE_LABELING = "labeling"
PHASE_EXTENDING = "extending"
PHASE_DONE = "done"


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def _overlaps(a: Chunk, b: Chunk) -> bool:
    if a.transcript_id != b.transcript_id or a.strategy != b.strategy:
        return False
    return chunks_overlap(a, b)


@dataclass
class StoryState:
    story_id: str
    ranking: tuple[str, ...]
    labels: dict[str, int] = field(default_factory=dict)
    positives: int = 0
    pending_pins: list[str] = field(default_factory=list)

    def recount(self) -> None:
        self.positives = sum(1 for v in self.labels.values() if v == 1)


class AnnotationSession:
    """One annotator working through one corpus and story set."""

    def __init__(
        self,
        session_id: str,
        annotator: str,
        chunks: Sequence[Chunk],
        stories: Sequence[UserStory],
        rankings: Mapping[str, Sequence[str]],
        journal_path: str | Path,
        *,
        transcripts: Sequence[Transcript] = (),
        phase1_target: int = 5,
        required_positives: int = 2,
        _journal_handle: TextIO | None = None,
    ):
        if phase1_target < 1:
            raise DataError("phase1_target must be >= 1")
        if required_positives < 1:
            raise DataError("required_positives must be >= 1")
        self.session_id = session_id
        self.annotator = annotator
        self.chunks: dict[str, Chunk] = {}
        for chunk in chunks:
            if chunk.id in self.chunks:
                raise DataError(f"duplicate chunk id {chunk.id!r}")
            self.chunks[chunk.id] = chunk
        self.stories: dict[str, UserStory] = {}
        for story in stories:
            if story.id in self.stories:
                raise DataError(f"duplicate story id {story.id!r}")
            self.stories[story.id] = story
        self.transcripts: dict[str, Transcript] = {t.id: t for t in transcripts}
        self.phase1_target = phase1_target
        self.required_positives = required_positives
        self.states: dict[str, StoryState] = {}
        for story_id in self.stories:
            ranking = tuple(rankings.get(story_id, ()))
            if not ranking:
                raise DataError(f"no ranking for story {story_id!r}")
            for chunk_id in ranking:
                if chunk_id not in self.chunks:
                    raise DataError(
                        f"ranking for {story_id!r} names unknown chunk {chunk_id!r}"
                    )
            self.states[story_id] = StoryState(story_id=story_id, ranking=ranking)
        self.journal_path = Path(journal_path)
        self._handle = _journal_handle

    # -- candidate selection ------------------------------------------------

    def _eligible_from_ranking(
        self, state: StoryState, blocked: list[str]
    ) -> str | None:
        """Next ranked chunk that is unlabeled, unpinned, and does not
        overlap anything already labeled or queued for this story."""
        blockers = [self.chunks[cid] for cid in blocked]
        for chunk_id in state.ranking:
            if chunk_id in state.labels or chunk_id in state.pending_pins:
                continue
            chunk = self.chunks[chunk_id]
            if any(_overlaps(chunk, other) for other in blockers):
                continue
            return chunk_id
        return None

    def pending_candidates(self, story_id: str) -> list[str]:
        """The chunks currently awaiting a label for this story, pins first."""
        state = self._state(story_id)
        queue = list(state.pending_pins)
        labeled = len(state.labels)
        if labeled + len(queue) < self.phase1_target:
            want = self.phase1_target - labeled - len(queue)
            blocked = list(state.labels) + queue
            for _ in range(want):
                candidate = self._eligible_from_ranking(state, blocked)
                if candidate is None:
                    break
                queue.append(candidate)
                blocked.append(candidate)
        elif not queue and labeled >= self.phase1_target:
            if state.positives < self.required_positives:
                candidate = self._eligible_from_ranking(state, list(state.labels))
                if candidate is not None:
                    queue.append(candidate)
        return queue

    def story_phase(self, story_id: str) -> str:
        state = self._state(story_id)
        if len(state.labels) < self.phase1_target:
            if state.pending_pins or self.pending_candidates(story_id):
                return PHASE_LABELING
            return PHASE_DONE  # ranking exhausted before the target
        if state.positives >= self.required_positives:
            return PHASE_DONE
        if self.pending_candidates(story_id):
            return PHASE_EXTENDING
        return PHASE_DONE

    def story_status(self, story_id: str) -> dict[str, Any]:
        state = self._state(story_id)
        return {
            "story_id": story_id,
            "phase": self.story_phase(story_id),
            "labeled": len(state.labels),
            "positives": state.positives,
            "pending": self.pending_candidates(story_id),
        }

    def progress(self) -> dict[str, Any]:
        statuses = [self.story_status(sid) for sid in self.stories]
        return {
            "session_id": self.session_id,
            "annotator": self.annotator,
            "stories_done": sum(1 for s in statuses if s["phase"] == PHASE_DONE),
            "story_count": len(statuses),
            "labels_total": sum(s["labeled"] for s in statuses),
            "stories": statuses,
        }

    # -- events -------------------------------------------------------------

    def record_label(
        self, story_id: str, chunk_id: str, label: int, amend: bool = False
    ) -> dict[str, Any]:
        state = self._state(story_id)
        if chunk_id not in self.chunks:
            raise DataError(f"unknown chunk {chunk_id!r}")
        if label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {label!r}")
        already = chunk_id in state.labels
        if already and not amend:
            raise DataError(
                f"({story_id}, {chunk_id}) is already labeled; amend to change it"
            )
        if not already:
            if amend:
                raise DataError(
                    f"({story_id}, {chunk_id}) has no label to amend"
                )
            if chunk_id not in self.pending_candidates(story_id):
                raise DataError(
                    f"chunk {chunk_id!r} is not an offered candidate for "
                    f"{story_id!r}; pin it first"
                )
        self._append(
            {
                "event": "label",
                "story_id": story_id,
                "chunk_id": chunk_id,
                "label": label,
                "amend": already,
                "at": _now(),
            }
        )
        self._apply_label(state, chunk_id, label)
        return self.story_status(story_id)

    def record_pin(self, story_id: str, chunk_id: str) -> dict[str, Any]:
        state = self._state(story_id)
        if chunk_id not in self.chunks:
            raise DataError(f"unknown chunk {chunk_id!r}")
        if chunk_id in state.labels:
            raise DataError(f"({story_id}, {chunk_id}) is already labeled")
        if chunk_id in state.pending_pins:
            raise DataError(f"chunk {chunk_id!r} is already pinned for {story_id!r}")
        self._append(
            {
                "event": "pin",
                "story_id": story_id,
                "chunk_id": chunk_id,
                "at": _now(),
            }
        )
        state.pending_pins.append(chunk_id)
        return self.story_status(story_id)

    def _apply_label(self, state: StoryState, chunk_id: str, label: int) -> None:
        state.labels[chunk_id] = label
        if chunk_id in state.pending_pins:
            state.pending_pins.remove(chunk_id)
        state.recount()

    # -- output -------------------------------------------------------------

    def export_labels(self) -> dict[Pair, int]:
        return {
            (chunk_id, story_id): label
            for story_id, state in self.states.items()
            for chunk_id, label in state.labels.items()
        }

    def search_chunks(self, query: str = "", limit: int = 20) -> list[Chunk]:
        """Case-insensitive substring search over chunk text, position order."""
        needle = query.strip().lower()
        hits = [
            chunk
            for chunk in self.chunks.values()
            if not needle or needle in chunk.text.lower()
        ]
        return hits[: max(0, limit)]

    def context_turns(self, chunk_id: str) -> dict[str, Any] | None:
        """The turn just before and after a chunk, when spans are turn
        indices and the source transcript was kept with the session."""
        chunk = self.chunks.get(chunk_id)
        if chunk is None:
            raise DataError(f"unknown chunk {chunk_id!r}")
        if chunk.strategy not in ("turns", "lines"):
            return None
        transcript = self.transcripts.get(chunk.transcript_id)
        if transcript is None:
            return None

        def turn_payload(index: int) -> dict[str, str] | None:
            if 0 <= index < len(transcript.turns):
                turn = transcript.turns[index]
                return {"speaker": turn.speaker, "text": turn.text}
            return None

        return {
            "before": turn_payload(chunk.span_start - 1),
            "after": turn_payload(chunk.span_end + 1),
        }

    # -- plumbing -----------------------------------------------------------

    def _state(self, story_id: str) -> StoryState:
        state = self.states.get(story_id)
        if state is None:
            raise DataError(f"unknown story {story_id!r}")
        return state

    def _append(self, record: dict) -> None:
        if self._handle is None:
            self._handle = self.journal_path.open("a", encoding="utf-8")
        self._handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._handle.flush()
        os.fsync(self._handle.fileno())

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None

    def __enter__(self) -> "AnnotationSession":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def _chunk_payload(chunk: Chunk) -> dict[str, Any]:
    return {
        "id": chunk.id,
        "transcript_id": chunk.transcript_id,
        "span_start": chunk.span_start,
        "span_end": chunk.span_end,
        "text": chunk.text,
        "token_count": chunk.token_count,
        "strategy": chunk.strategy,
    }


def _chunk_from_payload(payload: Mapping[str, Any]) -> Chunk:
    return Chunk(
        id=str(payload["id"]),
        transcript_id=str(payload["transcript_id"]),
        span_start=int(payload["span_start"]),
        span_end=int(payload["span_end"]),
        text=str(payload["text"]),
        token_count=int(payload["token_count"]),
        strategy=str(payload["strategy"]),
    )


def create_session(
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    embeddings: Mapping[str, Vector],
    journal_path: str | Path,
    *,
    annotator: str = "anonymous",
    session_id: str | None = None,
    transcripts: Sequence[Transcript] = (),
    phase1_target: int = 5,
    required_positives: int = 2,
) -> AnnotationSession:
    """Rank every chunk per story, snapshot everything to a fresh journal,
    and hand back a live session."""
    if not chunks:
        raise DataError("a session needs at least one chunk")
    if not stories:
        raise DataError("a session needs at least one story")
    journal_path = Path(journal_path)
    if journal_path.exists():
        raise DataError(
            f"journal {journal_path} already exists; load it instead"
        )
    chunk_vectors = []
    for chunk in chunks:
        vector = embeddings.get(chunk.id)
        if vector is None:
            raise DataError(f"no embedding for chunk {chunk.id!r}")
        chunk_vectors.append(vector)
    rankings: dict[str, list[str]] = {}
    for story in stories:
        vector = embeddings.get(story.id)
        if vector is None:
            raise DataError(f"no embedding for story {story.id!r}")
        order = rank_chunk_indices(vector, chunk_vectors)
        rankings[story.id] = [chunks[i].id for i in order]
    session_id = session_id or uuid.uuid4().hex[:12]
    # Build (and thereby validate) the session before the journal file is
    # created; a failed create must not leave a stub journal behind.
    session = AnnotationSession(
        session_id=session_id,
        annotator=annotator,
        chunks=chunks,
        stories=stories,
        rankings=rankings,
        journal_path=journal_path,
        transcripts=transcripts,
        phase1_target=phase1_target,
        required_positives=required_positives,
    )
    handle = journal_path.open("w", encoding="utf-8")
    open_event = {
        "event": "open",
        "session_id": session_id,
        "annotator": annotator,
        "phase1_target": phase1_target,
        "required_positives": required_positives,
        "chunks": [_chunk_payload(c) for c in chunks],
        "stories": [{"id": s.id, "text": s.text} for s in stories],
        "transcripts": [
            {
                "id": t.id,
                "source_kind": t.source_kind,
                "turns": [{"speaker": turn.speaker, "text": turn.text} for turn in t.turns],
            }
            for t in transcripts
        ],
        "rankings": rankings,
        "at": _now(),
    }
    handle.write(json.dumps(open_event, ensure_ascii=False) + "\n")
    handle.flush()
    os.fsync(handle.fileno())
    session._handle = handle
    return session


def load_session(journal_path: str | Path) -> AnnotationSession:
    """Replay a journal into a live session; labeling can continue."""
    journal_path = Path(journal_path)
    if not journal_path.exists():
        raise DataError(f"journal not found: {journal_path}")
    session: AnnotationSession | None = None
    with journal_path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                raise DataError(
                    f"{journal_path}:{line_no}: corrupt journal line"
                ) from None
            event = record.get("event")
            if event == "open":
                if session is not None:
                    raise DataError(
                        f"{journal_path}:{line_no}: second open event"
                    )
                transcripts = [
                    Transcript(
                        id=t["id"],
                        source_kind=t.get("source_kind", "interview"),
                        turns=tuple(
                            Turn(index=i, speaker=turn["speaker"], text=turn["text"])
                            for i, turn in enumerate(t["turns"])
                        ),
                    )
                    for t in record.get("transcripts", [])
                ]
                session = AnnotationSession(
                    session_id=record["session_id"],
                    annotator=record.get("annotator", "anonymous"),
                    chunks=[_chunk_from_payload(c) for c in record["chunks"]],
                    stories=[
                        UserStory.from_text(s["id"], s["text"])
                        for s in record["stories"]
                    ],
                    rankings=record["rankings"],
                    journal_path=journal_path,
                    transcripts=transcripts,
                    phase1_target=int(record.get("phase1_target", 5)),
                    required_positives=int(record.get("required_positives", 2)),
                )
            elif event == "label":
                if session is None:
                    raise DataError(
                        f"{journal_path}:{line_no}: label before open event"
                    )
                state = session.states[record["story_id"]]
                session._apply_label(
                    state, record["chunk_id"], int(record["label"])
                )
            elif event == "pin":
                if session is None:
                    raise DataError(
                        f"{journal_path}:{line_no}: pin before open event"
                    )
                state = session.states[record["story_id"]]
                if record["chunk_id"] not in state.labels:
                    state.pending_pins.append(record["chunk_id"])
            else:
                raise DataError(
                    f"{journal_path}:{line_no}: unknown event {event!r}"
                )
    if session is None:
        raise DataError(f"{journal_path}: no open event found")
    return session


@dataclass(frozen=True)
class Disagreement:
    story_id: str
    chunk_id: str
    labels: tuple[int, ...]


@dataclass(frozen=True)
class AgreementResult:
    kappa: float
    pair_count: int
    session_ids: tuple[str, ...]
    disagreements: tuple[Disagreement, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "kappa": self.kappa,
            "pair_count": self.pair_count,
            "sessions": list(self.session_ids),
            "disagreements": [
                {
                    "story_id": d.story_id,
                    "chunk_id": d.chunk_id,
                    "labels": list(d.labels),
                }
                for d in self.disagreements
            ],
        }


def agreement(sessions: Sequence[AnnotationSession]) -> AgreementResult:
    """Chance-corrected agreement over the pairs every session labeled."""
    if len(sessions) < 2:
        raise DataError("agreement needs at least two sessions")
    label_maps = [s.export_labels() for s in sessions]
    common = set(label_maps[0])
    for labels in label_maps[1:]:
        common &= set(labels)
    if not common:
        raise DataError("sessions share no labeled pairs")
    ordered = sorted(common, key=lambda p: (p[1], p[0]))
    ratings = []
    disagreements = []
    for pair in ordered:
        votes = [labels[pair] for labels in label_maps]
        ratings.append([votes.count(0), votes.count(1)])
        if len(set(votes)) > 1:
            disagreements.append(
                Disagreement(
                    story_id=pair[1], chunk_id=pair[0], labels=tuple(votes)
                )
            )
    return AgreementResult(
        kappa=fleiss_kappa(ratings),
        pair_count=len(ordered),
        session_ids=tuple(s.session_id for s in sessions),
        disagreements=tuple(disagreements),
    )
