"""Readers and writers for the on-disk formats.

Formats kept deliberately plain so artifacts diff well in review:

* transcripts: JSONL (``{"speaker", "text"}`` per line) or plain text
  (``Speaker: utterance``; lines without a speaker prefix continue the
  previous turn).
* stories: one story per line, or JSONL with optional ids.
* labels: CSV with header ``story_id,chunk_id,label``.
* chunks: JSONL with id, transcript id, span, text, and token count.
"""

from __future__ import annotations

import csv
import json
import re
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .alignment import Pair
from .corpus import Chunk, Transcript, Turn, UserStory
from .chunking import parse_chunk_id
from .errors import DataError

_SPEAKER_LINE_RE = re.compile(r"^(?P<speaker>[^:\s][^:]{0,63}):\s*(?P<text>.*)$")

LABELS_HEADER = ["story_id", "chunk_id", "label"]


def load_transcript(
    path: str | Path,
    fmt: str = "auto",
    source_kind: str = "interview",
) -> Transcript:
    path = Path(path)
    if not path.exists():
        raise DataError(f"transcript file not found: {path}")
    if fmt == "auto":
        fmt = "jsonl" if path.suffix.lower() in {".jsonl", ".ndjson"} else "plain"
    if fmt == "jsonl":
        turns = _turns_from_jsonl(path)
    elif fmt == "plain":
        turns = _turns_from_plain(path)
    else:
        raise DataError(f"unknown transcript format {fmt!r}")
    if not turns:
        raise DataError(f"{path}: no turns found")
    return Transcript(id=path.stem, turns=tuple(turns), source_kind=source_kind)


def _turns_from_jsonl(path: Path) -> list[Turn]:
    turns: list[Turn] = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}:{line_no}: expected an object per line")
            speaker = record.get("speaker")
            text = record.get("text")
            if not isinstance(speaker, str) or not speaker.strip():
                raise DataError(f"{path}:{line_no}: missing or empty 'speaker'")
            if not isinstance(text, str) or not text.strip():
                raise DataError(f"{path}:{line_no}: missing or empty 'text'")
            turns.append(Turn(index=len(turns), speaker=speaker.strip(), text=text.strip()))
    return turns


def _turns_from_plain(path: Path) -> list[Turn]:
    pending: list[tuple[str, list[str], int]] = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            stripped = line.rstrip("\n")
            if not stripped.strip():
                continue
            match = _SPEAKER_LINE_RE.match(stripped)
            if match:
                pending.append(
                    (match.group("speaker").strip(), [match.group("text").strip()], line_no)
                )
            else:
                if not pending:
                    raise DataError(
                        f"{path}:{line_no}: continuation line before any "
                        "'Speaker: text' line"
                    )
                pending[-1][1].append(stripped.strip())
    turns: list[Turn] = []
    for index, (speaker, pieces, line_no) in enumerate(pending):
        text = " ".join(piece for piece in pieces if piece)
        if not text.strip():
            raise DataError(f"{path}:{line_no}: turn for {speaker!r} has no text")
        turns.append(Turn(index=index, speaker=speaker, text=text))
    return turns


def load_stories(path: str | Path, fmt: str = "auto") -> list[UserStory]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"stories file not found: {path}")
    if fmt == "auto":
        fmt = "jsonl" if path.suffix.lower() in {".jsonl", ".ndjson"} else "lines"
    if fmt == "lines":
        stories = [
            UserStory.from_text(f"s{k}", line.strip())
            for k, line in enumerate(
                (l for l in path.read_text(encoding="utf-8").splitlines() if l.strip()),
                start=1,
            )
        ]
    elif fmt == "jsonl":
        stories = _stories_from_jsonl(path)
    else:
        raise DataError(f"unknown stories format {fmt!r}")
    if not stories:
        raise DataError(f"{path}: no stories found")
    seen: set[str] = set()
    for story in stories:
        if story.id in seen:
            raise DataError(f"{path}: duplicate story id {story.id!r}")
        seen.add(story.id)
    return stories


def _stories_from_jsonl(path: Path) -> list[UserStory]:
    stories: list[UserStory] = []
    ordinal = 0
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            ordinal += 1
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DataError(f"{path}:{line_no}: expected an object per line")
            text = record.get("text")
            if not isinstance(text, str) or not text.strip():
                raise DataError(f"{path}:{line_no}: missing or empty 'text'")
            story_id = record.get("id") or f"s{ordinal}"
            if not isinstance(story_id, str):
                raise DataError(f"{path}:{line_no}: story id must be a string")
            stories.append(UserStory.from_text(story_id, text.strip()))
    return stories


def write_stories(stories: Sequence[UserStory], path: str | Path, fmt: str = "lines") -> None:
    path = Path(path)
    if fmt == "lines":
        path.write_text(
            "".join(f"{story.text}\n" for story in stories), encoding="utf-8"
        )
    elif fmt == "jsonl":
        with path.open("w", encoding="utf-8") as handle:
            for story in stories:
                handle.write(json.dumps({"id": story.id, "text": story.text}) + "\n")
    else:
        raise DataError(f"unknown stories format {fmt!r}")


def read_labels_csv(path: str | Path) -> dict[Pair, int]:
    """Labels keyed by (chunk_id, story_id), matching the matrix pair order."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"labels file not found: {path}")
    labels: dict[Pair, int] = {}
    with path.open(encoding="utf-8", newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DataError(f"{path}: empty labels file") from None
        if [h.strip() for h in header] != LABELS_HEADER:
            raise DataError(
                f"{path}: expected header {','.join(LABELS_HEADER)!r}, "
                f"got {','.join(header)!r}"
            )
        for row_no, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 3:
                raise DataError(f"{path}:{row_no}: expected 3 columns, got {len(row)}")
            story_id, chunk_id, raw_label = (field.strip() for field in row)
            if raw_label not in {"0", "1"}:
                raise DataError(f"{path}:{row_no}: label must be 0 or 1, got {raw_label!r}")
            if not story_id or not chunk_id:
                raise DataError(f"{path}:{row_no}: empty story or chunk id")
            pair = (chunk_id, story_id)
            if pair in labels:
                raise DataError(
                    f"{path}:{row_no}: duplicate label for ({story_id}, {chunk_id})"
                )
            labels[pair] = int(raw_label)
    return labels


def write_labels_csv(labels: Mapping[Pair, int], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(LABELS_HEADER)
        for chunk_id, story_id in sorted(labels, key=lambda p: (p[1], p[0])):
            writer.writerow([story_id, chunk_id, labels[(chunk_id, story_id)]])


def write_chunks_jsonl(chunks: Sequence[Chunk], path: str | Path) -> None:
    path = Path(path)
    with path.open("w", encoding="utf-8") as handle:
        for chunk in chunks:
            handle.write(
                json.dumps(
                    {
                        "id": chunk.id,
                        "transcript_id": chunk.transcript_id,
                        "span_start": chunk.span_start,
                        "span_end": chunk.span_end,
                        "text": chunk.text,
                        "token_count": chunk.token_count,
                    },
                    ensure_ascii=False,
                )
                + "\n"
            )


def read_chunks_jsonl(path: str | Path) -> list[Chunk]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"chunks file not found: {path}")
    chunks: list[Chunk] = []
    with path.open(encoding="utf-8") as handle:
        for line_no, line in enumerate(handle, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DataError(f"{path}:{line_no}: invalid JSON ({exc.msg})") from None
            try:
                strategy = parse_chunk_id(str(record["id"]))[1]
                chunks.append(
                    Chunk(
                        id=str(record["id"]),
                        transcript_id=str(record["transcript_id"]),
                        span_start=int(record["span_start"]),
                        span_end=int(record["span_end"]),
                        text=str(record["text"]),
                        token_count=int(record["token_count"]),
                        strategy=strategy,
                    )
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"{path}:{line_no}: malformed chunk record ({exc})") from None
    if not chunks:
        raise DataError(f"{path}: no chunks found")
    return chunks


def load_gold_labels(
    path: str | Path,
    known_chunks: Iterable[str] | None = None,
    known_stories: Iterable[str] | None = None,
) -> dict[Pair, int]:
    """Labels CSV plus referential validation against a known universe."""
    labels = read_labels_csv(path)
    if known_chunks is not None:
        chunk_set = set(known_chunks)
        for chunk_id, _ in labels:
            if chunk_id not in chunk_set:
                raise DataError(f"{path}: unknown chunk id {chunk_id!r} in labels")
    if known_stories is not None:
        story_set = set(known_stories)
        for _, story_id in labels:
            if story_id not in story_set:
                raise DataError(f"{path}: unknown story id {story_id!r} in labels")
    return labels
