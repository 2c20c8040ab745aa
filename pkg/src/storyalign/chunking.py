"""Slicing transcripts into judgeable chunks.

Three strategies:

* ``turns``: sliding window over speaker turns (the default; window 3,
  stride 1 keeps local dialogue context around every turn).
* ``tokens``: sliding window over whitespace tokens of the rendered text,
  for sources without turn structure or for length-controlled chunks.
* ``lines``: one chunk per non-empty line, for documents that are already
  itemized (feature lists, numbered requirements).

Chunk ids embed transcript, strategy, and span (``tr#turns:0-2``), so overlap
between two chunks is decidable from ids alone.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Union

from sklearn.base import BaseEstimator, TransformerMixin

from .corpus import Chunk, Transcript
from .errors import DataError
from .tokens import Tokenizer, count_tokens, whitespace_tokenize

DEFAULT_TURN_WINDOW = 3
DEFAULT_TURN_STRIDE = 1
DEFAULT_TOKEN_WINDOW = 200
DEFAULT_TOKEN_STRIDE = 100


def make_chunk_id(transcript_id: str, strategy: str, start: int, end: int) -> str:
    return f"{transcript_id}#{strategy}:{start}-{end}"


def parse_chunk_id(chunk_id: str) -> tuple[str, str, int, int]:
    """Split a chunk id back into (transcript_id, strategy, start, end)."""
    transcript_id, sep, tail = chunk_id.rpartition("#")
    if not sep or not transcript_id:
        raise DataError(f"chunk id {chunk_id!r} is not in transcript#strategy:span form")
    strategy, sep, span = tail.partition(":")
    if not sep or not strategy:
        raise DataError(f"chunk id {chunk_id!r} is missing its strategy segment")
    start_text, sep, end_text = span.partition("-")
    try:
        start, end = int(start_text), int(end_text)
    except ValueError:
        raise DataError(f"chunk id {chunk_id!r} has a malformed span {span!r}") from None
    if not sep or start < 0 or end < start:
        raise DataError(f"chunk id {chunk_id!r} has a malformed span {span!r}")
    return transcript_id, strategy, start, end


def chunks_overlap(a: Union[Chunk, str], b: Union[Chunk, str]) -> bool:
    """Do two chunks share any source positions?

    Raises when the chunks come from different transcripts or different
    strategies; their spans index different things and comparing them would
    silently answer the wrong question.
    """
    a_key = _span_key(a)
    b_key = _span_key(b)
    if a_key[0] != b_key[0]:
        raise DataError(
            f"cannot compare chunks across transcripts ({a_key[0]!r} vs {b_key[0]!r})"
        )
    if a_key[1] != b_key[1]:
        raise DataError(
            f"cannot compare chunks across strategies ({a_key[1]!r} vs {b_key[1]!r})"
        )
    return a_key[2] <= b_key[3] and b_key[2] <= a_key[3]


def _span_key(chunk: Union[Chunk, str]) -> tuple[str, str, int, int]:
    if isinstance(chunk, Chunk):
        return chunk.transcript_id, chunk.strategy, chunk.span_start, chunk.span_end
    return parse_chunk_id(chunk)


def _window_starts(total: int, window: int, stride: int) -> list[int]:
    """Start offsets on the stride grid; the final (possibly partial) window
    is always kept so the tail of the source is covered."""
    if total <= window:
        return [0]
    starts = [0]
    while starts[-1] + window < total:
        starts.append(starts[-1] + stride)
    return starts


def chunk_by_turns(
    transcript: Transcript,
    window: int = DEFAULT_TURN_WINDOW,
    stride: int = DEFAULT_TURN_STRIDE,
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    """Sliding window over speaker turns, rendered as ``speaker: text`` lines."""
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    if not 1 <= stride <= window:
        raise DataError(f"stride must satisfy 1 <= stride <= window, got {stride}")
    chunks = []
    for start in _window_starts(len(transcript.turns), window, stride):
        turns = transcript.turns[start : start + window]
        end = start + len(turns) - 1
        text = "\n".join(turn.render() for turn in turns)
        chunks.append(
            Chunk(
                id=make_chunk_id(transcript.id, "turns", start, end),
                transcript_id=transcript.id,
                span_start=start,
                span_end=end,
                text=text,
                token_count=count_tokens(text, tokenizer),
                strategy="turns",
            )
        )
    return chunks


def chunk_by_tokens(
    transcript: Transcript,
    window: int = DEFAULT_TOKEN_WINDOW,
    stride: int = DEFAULT_TOKEN_STRIDE,
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    """Sliding window over tokens of the rendered transcript.

    Chunk text re-joins tokens with single spaces, so original line breaks are
    not preserved inside token chunks.
    """
    if window < 1:
        raise DataError(f"window must be >= 1, got {window}")
    if not 1 <= stride < window:
        raise DataError(f"stride must satisfy 1 <= stride < window, got {stride}")
    tok = tokenizer or whitespace_tokenize
    tokens = tok(transcript.render())
    if not tokens:
        raise DataError(f"transcript {transcript.id!r} has no tokens")
    chunks = []
    for start in _window_starts(len(tokens), window, stride):
        piece = tokens[start : start + window]
        end = start + len(piece) - 1
        chunks.append(
            Chunk(
                id=make_chunk_id(transcript.id, "tokens", start, end),
                transcript_id=transcript.id,
                span_start=start,
                span_end=end,
                text=" ".join(piece),
                token_count=len(piece),
                strategy="tokens",
            )
        )
    return chunks


def chunk_by_lines(
    source: Union[Transcript, str],
    transcript_id: str = "text",
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    """One chunk per non-empty line; spans are line indices."""
    if isinstance(source, Transcript):
        text = source.render()
        transcript_id = source.id
    else:
        text = source
    chunks = []
    for line_no, line in enumerate(text.splitlines()):
        stripped = line.strip()
        if not stripped:
            continue
        chunks.append(
            Chunk(
                id=make_chunk_id(transcript_id, "lines", line_no, line_no),
                transcript_id=transcript_id,
                span_start=line_no,
                span_end=line_no,
                text=stripped,
                token_count=count_tokens(stripped, tokenizer),
                strategy="lines",
            )
        )
    if not chunks:
        raise DataError(f"source {transcript_id!r} has no non-empty lines")
    return chunks


@dataclass(frozen=True)
class ChunkingConfig:
    """Strategy plus window geometry; None picks the strategy's default."""

    strategy: str = "turns"
    window: int | None = None
    stride: int | None = None

    def resolved(self) -> tuple[str, int, int]:
        if self.strategy == "turns":
            return (
                "turns",
                self.window if self.window is not None else DEFAULT_TURN_WINDOW,
                self.stride if self.stride is not None else DEFAULT_TURN_STRIDE,
            )
        if self.strategy == "tokens":
            return (
                "tokens",
                self.window if self.window is not None else DEFAULT_TOKEN_WINDOW,
                self.stride if self.stride is not None else DEFAULT_TOKEN_STRIDE,
            )
        if self.strategy == "lines":
            return ("lines", 0, 0)
        raise DataError(f"unknown chunking strategy {self.strategy!r}")


def chunk_transcript(
    transcript: Transcript,
    config: ChunkingConfig,
    tokenizer: Tokenizer | None = None,
) -> list[Chunk]:
    strategy, window, stride = config.resolved()
    if strategy == "turns":
        return chunk_by_turns(transcript, window, stride, tokenizer)
    if strategy == "tokens":
        return chunk_by_tokens(transcript, window, stride, tokenizer)
    return chunk_by_lines(transcript, tokenizer=tokenizer)


class _ChunkerBase(TransformerMixin, BaseEstimator):
    """Stateless transformers: fit is a no-op, transform maps transcripts to
    a flat chunk list. Windows never cross transcript boundaries."""

    def fit(self, X, y=None):  # noqa: ARG002 - sklearn signature
        return self

    def transform(self, X: Union[Transcript, Iterable[Transcript]]) -> list[Chunk]:
        transcripts = [X] if isinstance(X, Transcript) else list(X)
        chunks: list[Chunk] = []
        for transcript in transcripts:
            if not isinstance(transcript, Transcript):
                raise DataError(f"expected Transcript, got {type(transcript).__name__}")
            chunks.extend(self._chunk_one(transcript))
        return chunks

    def _chunk_one(self, transcript: Transcript) -> list[Chunk]:
        raise NotImplementedError


class TurnWindowChunker(_ChunkerBase):
    def __init__(self, window: int = DEFAULT_TURN_WINDOW, stride: int = DEFAULT_TURN_STRIDE):
        self.window = window
        self.stride = stride

    def _chunk_one(self, transcript: Transcript) -> list[Chunk]:
        return chunk_by_turns(transcript, self.window, self.stride)


class TokenWindowChunker(_ChunkerBase):
    def __init__(self, window: int = DEFAULT_TOKEN_WINDOW, stride: int = DEFAULT_TOKEN_STRIDE):
        self.window = window
        self.stride = stride

    def _chunk_one(self, transcript: Transcript) -> list[Chunk]:
        return chunk_by_tokens(transcript, self.window, self.stride)


class LineChunker(_ChunkerBase):
    def _chunk_one(self, transcript: Transcript) -> list[Chunk]:
        return chunk_by_lines(transcript)
