"""Embedding-based candidate blocking for pairwise matching.

Judging every (chunk, story) pair is quadratic in corpus size and dominated
by model calls. Blocking keeps, for each story, only its top-K most similar
chunks by embedding cosine; the matcher then runs on that candidate set.
The sweep helpers quantify the trade: recall of a reference positive set
versus the fraction of pair tokens that still need judging.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

from .alignment import Pair
from .corpus import Chunk, UserStory
from .embeddings import Vector, cosine_similarity
from .errors import DataError
from .tokens import Tokenizer, count_tokens


@dataclass(frozen=True)
class CandidateSet:
    """Pairs retained for judging, with per-story similarity order."""

    k: int
    pairs: frozenset[Pair]
    coverage: dict[str, tuple[str, ...]]

    def pair_count(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class SweepPoint:
    """One row of a blocking sweep."""

    k: int
    recall: float
    token_fraction: float
    matcher_calls: int


def rank_chunk_indices(
    story_vector: Vector,
    chunk_vectors: Sequence[Vector],
) -> list[int]:
    """Chunk positions sorted by descending cosine; ties by ascending index."""
    scored = [
        (-cosine_similarity(story_vector, vector), index)
        for index, vector in enumerate(chunk_vectors)
    ]
    scored.sort()
    return [index for _, index in scored]


def _vectors_for(
    items: Sequence, embeddings: Mapping[str, Vector], what: str
) -> list[Vector]:
    vectors = []
    for item in items:
        vector = embeddings.get(item.id)
        if vector is None:
            raise DataError(f"no embedding for {what} {item.id!r}")
        vectors.append(vector)
    return vectors


def block_top_k(
    stories: Sequence[UserStory],
    chunks: Sequence[Chunk],
    embeddings: Mapping[str, Vector],
    k: int,
) -> CandidateSet:
    """Per-story top-K chunk retention; K at or above |chunks| keeps all pairs."""
    if k < 1:
        raise DataError(f"K must be >= 1, got {k}")
    if not stories or not chunks:
        raise DataError("blocking needs at least one story and one chunk")
    chunk_vectors = _vectors_for(chunks, embeddings, "chunk")
    story_vectors = _vectors_for(stories, embeddings, "story")
    effective_k = min(k, len(chunks))
    pairs: set[Pair] = set()
    coverage: dict[str, tuple[str, ...]] = {}
    for story, story_vector in zip(stories, story_vectors):
        ranked = rank_chunk_indices(story_vector, chunk_vectors)
        kept = ranked[:effective_k]
        coverage[story.id] = tuple(chunks[i].id for i in kept)
        pairs.update((chunks[i].id, story.id) for i in kept)
    return CandidateSet(k=k, pairs=frozenset(pairs), coverage=coverage)


def recall_against(
    candidates: CandidateSet, reference_positives: Iterable[Pair]
) -> float:
    """Fraction of reference positives that survive blocking."""
    reference = set(reference_positives)
    if not reference:
        warnings.warn(
            "recall against an empty reference set is vacuous; returning 1.0",
            stacklevel=2,
        )
        return 1.0
    return len(reference & candidates.pairs) / len(reference)


def _pair_token_tables(
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    tokenizer: Tokenizer | None,
) -> tuple[dict[str, int], dict[str, int]]:
    chunk_tokens = {c.id: c.token_count for c in chunks}
    story_tokens = {s.id: count_tokens(s.text, tokenizer) for s in stories}
    return chunk_tokens, story_tokens


def token_fraction(
    candidates: CandidateSet,
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    per_pair_overhead: int = 0,
    tokenizer: Tokenizer | None = None,
) -> float:
    """Candidate pair token cost over full-product pair token cost.

    Pair cost is chunk tokens + story tokens + a fixed per-pair overhead
    (prompt scaffolding; 0 by default so the ratio reflects payload text).
    """
    if not chunks or not stories:
        raise DataError("token_fraction needs non-empty chunks and stories")
    chunk_tokens, story_tokens = _pair_token_tables(chunks, stories, tokenizer)
    for chunk_id, story_id in candidates.pairs:
        if chunk_id not in chunk_tokens or story_id not in story_tokens:
            raise DataError(
                f"candidate pair ({chunk_id!r}, {story_id!r}) is outside "
                "the chunk/story universe"
            )
    full = sum(
        chunk_tokens[c.id] + story_tokens[s.id] + per_pair_overhead
        for c in chunks
        for s in stories
    )
    kept = sum(
        chunk_tokens[chunk_id] + story_tokens[story_id] + per_pair_overhead
        for chunk_id, story_id in candidates.pairs
    )
    return kept / full


def sweep_blocking(
    stories: Sequence[UserStory],
    chunks: Sequence[Chunk],
    embeddings: Mapping[str, Vector],
    reference_positives: Iterable[Pair],
    per_pair_overhead: int = 0,
    tokenizer: Tokenizer | None = None,
) -> list[SweepPoint]:
    """Recall and token fraction for every K from 1 to |chunks|.

    Rankings are computed once per story and consumed incrementally, so the
    whole sweep costs one similarity pass rather than |chunks| passes.
    """
    if not stories or not chunks:
        raise DataError("sweep needs at least one story and one chunk")
    reference = set(reference_positives)
    chunk_ids = {c.id for c in chunks}
    story_ids = {s.id for s in stories}
    for chunk_id, story_id in reference:
        if chunk_id not in chunk_ids or story_id not in story_ids:
            raise DataError(
                f"reference pair ({chunk_id!r}, {story_id!r}) is outside "
                "the chunk/story universe"
            )
    chunk_tokens, story_tokens = _pair_token_tables(chunks, stories, tokenizer)
    full_cost = sum(
        chunk_tokens[c.id] + story_tokens[s.id] + per_pair_overhead
        for c in chunks
        for s in stories
    )
    chunk_vectors = _vectors_for(chunks, embeddings, "chunk")
    story_vectors = _vectors_for(stories, embeddings, "story")
    rankings = {
        story.id: rank_chunk_indices(vector, chunk_vectors)
        for story, vector in zip(stories, story_vectors)
    }

    points: list[SweepPoint] = []
    hits = 0
    kept_cost = 0
    for k in range(1, len(chunks) + 1):
        for story in stories:
            chunk = chunks[rankings[story.id][k - 1]]
            if (chunk.id, story.id) in reference:
                hits += 1
            kept_cost += (
                chunk_tokens[chunk.id] + story_tokens[story.id] + per_pair_overhead
            )
        recall = hits / len(reference) if reference else 1.0
        points.append(
            SweepPoint(
                k=k,
                recall=recall,
                token_fraction=kept_cost / full_cost,
                matcher_calls=k * len(stories),
            )
        )
    return points


def min_tokens_for_recall(
    stories: Sequence[UserStory],
    chunks: Sequence[Chunk],
    embeddings: Mapping[str, Vector],
    reference_positives: Iterable[Pair],
    target_recall: float,
    per_pair_overhead: int = 0,
    tokenizer: Tokenizer | None = None,
) -> SweepPoint:
    """Smallest K whose blocking recall meets ``target_recall``.

    Recall at K=|chunks| is 1 by construction (the reference is validated
    against the pair universe), so a target in (0, 1] always resolves.
    """
    if not 0.0 < target_recall <= 1.0:
        raise DataError(f"target_recall must be in (0, 1], got {target_recall}")
    for point in sweep_blocking(
        stories,
        chunks,
        embeddings,
        reference_positives,
        per_pair_overhead,
        tokenizer,
    ):
        if point.recall >= target_recall:
            return point
    raise AssertionError("unreachable: recall at K=|chunks| is always 1")
