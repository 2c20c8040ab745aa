"""Shared builders for test corpora and matrices."""

from __future__ import annotations

import random
from typing import Mapping, Sequence

from storyalign.alignment import AlignmentLabel, AlignmentMatrix, Pair
from storyalign.corpus import Chunk, Transcript, Turn, UserStory
from storyalign.gateway import GatewayConfig, ModelGateway
from storyalign.mockserver import MockModelServer


def make_gateway(server: MockModelServer, cache_dir=None, **overrides) -> ModelGateway:
    settings = {
        "base_url": server.url,
        "retry_backoff": 0.0,
        "timeout": 5.0,
        "cache_dir": cache_dir,
    }
    settings.update(overrides)
    return ModelGateway(GatewayConfig(**settings))


def make_transcript(texts: Sequence[str], transcript_id: str = "tr") -> Transcript:
    speakers = ("Interviewer", "Stakeholder")
    turns = tuple(
        Turn(index=i, speaker=speakers[i % 2], text=text)
        for i, text in enumerate(texts)
    )
    return Transcript(id=transcript_id, turns=turns)


def make_chunk(
    chunk_id: str,
    text: str = "placeholder text",
    transcript_id: str = "tr",
    span: tuple[int, int] = (0, 0),
    strategy: str = "lines",
) -> Chunk:
    return Chunk(
        id=chunk_id,
        transcript_id=transcript_id,
        span_start=span[0],
        span_end=span[1],
        text=text,
        token_count=max(1, len(text.split())),
        strategy=strategy,
    )


def matrix_from_labels(
    chunk_ids: Sequence[str],
    story_ids: Sequence[str],
    labels: Mapping[Pair, int],
) -> AlignmentMatrix:
    return AlignmentMatrix.from_labels(
        chunk_ids,
        story_ids,
        [
            AlignmentLabel(chunk_id=c, story_id=s, label=v)
            for (c, s), v in labels.items()
        ],
    )


def random_label_map(
    rng: random.Random,
    chunk_ids: Sequence[str],
    story_ids: Sequence[str],
    positive_rate: float = 0.3,
    judged_rate: float = 1.0,
) -> dict[Pair, int]:
    labels: dict[Pair, int] = {}
    for c in chunk_ids:
        for s in story_ids:
            if rng.random() < judged_rate:
                labels[(c, s)] = 1 if rng.random() < positive_rate else 0
    return labels


def make_story(story_id: str, text: str) -> UserStory:
    return UserStory.from_text(story_id, text)


def planted_ranking_corpus(
    rng: random.Random,
    n_stories: int = 4,
    n_chunks: int = 100,
    ladder_size: int = 10,
    tokens_per_text: int = 4,
):
    """Corpus with fully controlled per-story rankings.

    Story j sits on axis j of a (n_stories + 1)-dim space. Each story owns a
    ladder of ``ladder_size`` chunks whose cosines descend from 0.98, so they
    occupy that story's top ranks in ladder order; all remaining chunks sit
    at cosine ~0.447 and every foreign ladder at 0. Two reference positives
    per story are planted on ladder rungs, one of them forced to the deepest
    rung somewhere so min-K sweeps end exactly at ``ladder_size``.

    Returns (chunks, stories, embeddings, reference_pairs).
    """
    import math

    assert n_chunks >= n_stories * ladder_size
    dim = n_stories + 1
    filler = " ".join(f"w{i}" for i in range(tokens_per_text - 1))
    chunks = [
        make_chunk(f"tr#lines:{i}-{i}", f"c{i} {filler}", span=(i, i))
        for i in range(n_chunks)
    ]
    stories = [make_story(f"s{j}", f"s{j} {filler}") for j in range(n_stories)]
    embeddings: dict[str, tuple[float, ...]] = {}
    for j, story in enumerate(stories):
        axis = [0.0] * dim
        axis[j] = 1.0
        embeddings[story.id] = tuple(axis)
    for i, chunk in enumerate(chunks):
        embeddings[chunk.id] = tuple([0.5] * dim)
    for j in range(n_stories):
        for rung in range(ladder_size):
            a = 0.98 - rung * 0.03
            b = math.sqrt(1 - a * a)
            vector = [0.0] * dim
            vector[j] = a
            vector[dim - 1] = b
            embeddings[chunks[j * ladder_size + rung].id] = tuple(vector)
    reference = set()
    deepest_story = rng.randrange(n_stories)
    for j, story in enumerate(stories):
        if j == deepest_story:
            rungs = [rng.randrange(ladder_size - 1), ladder_size - 1]
        else:
            rungs = rng.sample(range(ladder_size), 2)
        for rung in rungs:
            reference.add((chunks[j * ladder_size + rung].id, story.id))
    return chunks, stories, embeddings, reference
