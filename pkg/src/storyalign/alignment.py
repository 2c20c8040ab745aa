"""Alignment labels and the judged chunk/story matrix."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Mapping

from .errors import DataError

Pair = tuple[str, str]
"""(chunk_id, story_id)"""


@dataclass(frozen=True)
class AlignmentLabel:
    """One binary judgment for a (chunk, story) pair.

    ``provenance`` records who produced the label (e.g. ``llm_judge``,
    ``human``, ``keyword_oracle``); ``score`` carries the underlying real
    score when the matcher had one.
    """

    chunk_id: str
    story_id: str
    label: int
    provenance: str = "unknown"
    score: float | None = None

    def __post_init__(self) -> None:
        if self.label not in (0, 1):
            raise DataError(
                f"label for ({self.chunk_id}, {self.story_id}) must be 0 or 1, "
                f"got {self.label!r}"
            )


@dataclass(frozen=True)
class AlignmentMatrix:
    """Sparse binary alignment between a chunk list and a story list.

    ``judged`` holds every pair a matcher actually looked at; ``positives``
    is the subset it accepted. Pairs outside ``judged`` read as 0, which is
    how pruned pairs under blocking are treated by the metrics.
    """

    chunk_ids: tuple[str, ...]
    story_ids: tuple[str, ...]
    positives: frozenset[Pair]
    judged: frozenset[Pair]

    def __post_init__(self) -> None:
        if len(set(self.chunk_ids)) != len(self.chunk_ids):
            raise DataError("duplicate chunk ids in matrix")
        if len(set(self.story_ids)) != len(self.story_ids):
            raise DataError("duplicate story ids in matrix")
        chunk_set = set(self.chunk_ids)
        story_set = set(self.story_ids)
        for chunk_id, story_id in self.judged:
            if chunk_id not in chunk_set or story_id not in story_set:
                raise DataError(
                    f"judged pair ({chunk_id!r}, {story_id!r}) references "
                    "ids outside the matrix"
                )
        if not self.positives <= self.judged:
            raise DataError("positives must be a subset of judged pairs")

    @classmethod
    def from_labels(
        cls,
        chunk_ids: Iterable[str],
        story_ids: Iterable[str],
        labels: Iterable[AlignmentLabel],
    ) -> "AlignmentMatrix":
        labels = list(labels)
        judged = set()
        positives = set()
        for lab in labels:
            pair = (lab.chunk_id, lab.story_id)
            if pair in judged:
                raise DataError(f"pair {pair} labeled twice")
            judged.add(pair)
            if lab.label == 1:
                positives.add(pair)
        return cls(
            chunk_ids=tuple(chunk_ids),
            story_ids=tuple(story_ids),
            positives=frozenset(positives),
            judged=frozenset(judged),
        )

    @classmethod
    def from_label_map(
        cls,
        chunk_ids: Iterable[str],
        story_ids: Iterable[str],
        label_map: Mapping[Pair, int],
    ) -> "AlignmentMatrix":
        labels = [
            AlignmentLabel(chunk_id=c, story_id=s, label=v)
            for (c, s), v in label_map.items()
        ]
        return cls.from_labels(chunk_ids, story_ids, labels)

    def label(self, chunk_id: str, story_id: str) -> int:
        """0/1 for the pair; unjudged pairs read as 0."""
        return 1 if (chunk_id, story_id) in self.positives else 0

    def supported_stories(self) -> set[str]:
        """Stories aligned to at least one chunk."""
        return {story_id for _, story_id in self.positives}

    def covered_chunks(self) -> set[str]:
        """Chunks aligned to at least one story."""
        return {chunk_id for chunk_id, _ in self.positives}

    def evidence_for(self, story_id: str) -> list[str]:
        """Chunk ids supporting ``story_id``, in chunk-list order."""
        return [c for c in self.chunk_ids if (c, story_id) in self.positives]

    def stories_for(self, chunk_id: str) -> list[str]:
        """Story ids covering ``chunk_id``, in story-list order."""
        return [s for s in self.story_ids if (chunk_id, s) in self.positives]
