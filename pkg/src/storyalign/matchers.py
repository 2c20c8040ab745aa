"""Pairwise chunk/story matchers and threshold calibration.

Every matcher answers the same question, "does this chunk justify this
story", through ``match_pair`` returning a :class:`PairVerdict`, plus the
sklearn-flavored ``predict`` (and ``decision_function`` where a real score
exists underneath). Swapping matchers never changes pipeline plumbing.
"""

from __future__ import annotations

import logging
import re
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence, Union

import requests
from sklearn.base import BaseEstimator

from .corpus import Chunk, UserStory
from .embeddings import cosine_similarity
from .errors import DataError, TransportError
from .gateway import ModelGateway
from .metrics import macro_f1_scores
from .tokens import content_words

logger = logging.getLogger(__name__)

PairInput = tuple[Chunk, UserStory]

PARSE_CLEAN = "clean"
PARSE_RECOVERED = "recovered"
PARSE_DEFAULTED = "defaulted"

_INT_RE = re.compile(r"-?\d+")


@dataclass(frozen=True)
class PairVerdict:
    """Outcome of judging one (chunk, story) pair."""

    chunk_id: str
    story_id: str
    label: int
    provenance: str
    score: float | None = None
    parse_status: str = PARSE_CLEAN
    raw_response: str | None = None
    attempts: int = 1


def load_prompt(name: str, prompt_dir: str | Path | None = None) -> str:
    """Load a prompt asset; ``prompt_dir`` overrides the packaged default."""
    if prompt_dir is not None:
        override = Path(prompt_dir) / f"{name}.txt"
        if override.exists():
            return override.read_text(encoding="utf-8")
    packaged = resources.files("storyalign.prompts").joinpath(f"{name}.txt")
    return packaged.read_text(encoding="utf-8")


def fill_slots(template: str, **slots: str) -> str:
    for key, value in slots.items():
        template = template.replace(f"<{key}>", value)
    return template


def threshold_match(score: float, threshold: float) -> int:
    """1 iff score clears the threshold; a score exactly at the threshold is
    a positive, the one tie rule every score-based matcher shares."""
    return 1 if score >= threshold else 0


class PairMatcher(BaseEstimator):
    """Base class: per-pair judgment plus vectorized predict."""

    provenance = "matcher"

    def prepare(self, chunks: Sequence[Chunk], stories: Sequence[UserStory]) -> None:
        """Optional warm-up before per-pair calls (e.g. batch embedding)."""

    def match_pair(self, chunk: Chunk, story: UserStory) -> PairVerdict:
        raise NotImplementedError

    def verdicts(self, pairs: Sequence[PairInput]) -> list[PairVerdict]:
        return [self.match_pair(chunk, story) for chunk, story in pairs]

    def predict(self, pairs: Sequence[PairInput]) -> list[int]:
        return [verdict.label for verdict in self.verdicts(pairs)]


class LlmJudgeMatcher(PairMatcher):
    """Chat-model judge with a strict one-character output contract.

    The response must be exactly "1" or "0" after whitespace trimming.
    Anything else triggers a retry with the same prompts (temperature 0);
    when retries run out the pair defaults to label 0 and the verdict is
    marked ``defaulted`` so reports can count the failures.
    """

    provenance = "llm_judge"

    def __init__(
        self,
        gateway: ModelGateway,
        retry_limit: int = 2,
        temperature: float = 0.0,
        seed: int | None = None,
        prompt_dir: str | Path | None = None,
    ):
        self.gateway = gateway
        self.retry_limit = retry_limit
        self.temperature = temperature
        self.seed = seed
        self.prompt_dir = prompt_dir
        self.defaulted_count = 0

    def _prompts(self) -> tuple[str, str]:
        return (
            load_prompt("judge_system", self.prompt_dir),
            load_prompt("judge_user", self.prompt_dir),
        )

    @staticmethod
    def parse_verdict(raw: str) -> int | None:
        """The whole accepted language: optional whitespace around 1 or 0."""
        stripped = raw.strip()
        if stripped == "1":
            return 1
        if stripped == "0":
            return 0
        return None

    def match_pair(self, chunk: Chunk, story: UserStory) -> PairVerdict:
        system_prompt, user_template = self._prompts()
        user_prompt = fill_slots(user_template, story=story.text, chunk=chunk.text)
        raw = ""
        for attempt in range(self.retry_limit + 1):
            raw = self.gateway.chat(
                system_prompt,
                user_prompt,
                temperature=self.temperature,
                seed=self.seed,
            )
            label = self.parse_verdict(raw)
            if label is not None:
                status = PARSE_CLEAN if attempt == 0 else PARSE_RECOVERED
                return PairVerdict(
                    chunk_id=chunk.id,
                    story_id=story.id,
                    label=label,
                    provenance=self.provenance,
                    parse_status=status,
                    raw_response=raw,
                    attempts=attempt + 1,
                )
        self.defaulted_count += 1
        logger.warning(
            "judge output for (%s, %s) never parsed after %d attempts; "
            "defaulting to 0 (last response %r)",
            chunk.id,
            story.id,
            self.retry_limit + 1,
            raw[:80],
        )
        return PairVerdict(
            chunk_id=chunk.id,
            story_id=story.id,
            label=0,
            provenance=self.provenance,
            parse_status=PARSE_DEFAULTED,
            raw_response=raw,
            attempts=self.retry_limit + 1,
        )


class BiEncoderMatcher(PairMatcher):
    """Embedding cosine similarity against a fixed threshold."""

    provenance = "bi_encoder"

    def __init__(self, gateway: ModelGateway, threshold: float = 0.5):
        self.gateway = gateway
        self.threshold = threshold

    def prepare(self, chunks: Sequence[Chunk], stories: Sequence[UserStory]) -> None:
        texts = [c.text for c in chunks] + [s.text for s in stories]
        if texts:
            self.gateway.embed(texts)

    def score_pair(self, chunk: Chunk, story: UserStory) -> float:
        chunk_vec, story_vec = self.gateway.embed([chunk.text, story.text])
        return cosine_similarity(chunk_vec, story_vec)

    def decision_function(self, pairs: Sequence[PairInput]) -> list[float]:
        return [self.score_pair(chunk, story) for chunk, story in pairs]

    def match_pair(self, chunk: Chunk, story: UserStory) -> PairVerdict:
        score = self.score_pair(chunk, story)
        return PairVerdict(
            chunk_id=chunk.id,
            story_id=story.id,
            label=threshold_match(score, self.threshold),
            provenance=self.provenance,
            score=score,
        )


class ExternalScorerMatcher(PairMatcher):
    """Real-valued scorer behind a URL or callable, thresholded to 0/1.

    This is how a cross-encoder (or any reranker) plugs in: the endpoint
    receives ``{"pairs": [{"story": ..., "chunk": ...}]}`` and returns
    ``{"scores": [...]}`` in the same order.
    """

    provenance = "external_scorer"

    def __init__(
        self,
        scorer: Union[str, Callable[[str, str], float]],
        threshold: float = 0.5,
        batch_size: int = 32,
        timeout: float = 30.0,
    ):
        self.scorer = scorer
        self.threshold = threshold
        self.batch_size = batch_size
        self.timeout = timeout

    def _score_batch(self, pairs: Sequence[PairInput]) -> list[float]:
        if callable(self.scorer):
            return [self.scorer(story.text, chunk.text) for chunk, story in pairs]
        payload = {
            "pairs": [
                {"story": story.text, "chunk": chunk.text} for chunk, story in pairs
            ]
        }
        try:
            response = requests.post(self.scorer, json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"score endpoint {self.scorer} failed: {exc}") from exc
        if response.status_code != 200:
            raise TransportError(
                f"score endpoint {self.scorer} returned HTTP {response.status_code}"
            )
        try:
            scores = [float(s) for s in response.json()["scores"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise TransportError(
                f"score endpoint {self.scorer} returned a malformed body"
            ) from exc
        if len(scores) != len(pairs):
            raise TransportError(
                f"score endpoint returned {len(scores)} scores for {len(pairs)} pairs"
            )
        return scores

    def decision_function(self, pairs: Sequence[PairInput]) -> list[float]:
        scores: list[float] = []
        for start in range(0, len(pairs), self.batch_size):
            scores.extend(self._score_batch(pairs[start : start + self.batch_size]))
        return scores

    def match_pair(self, chunk: Chunk, story: UserStory) -> PairVerdict:
        score = self._score_batch([(chunk, story)])[0]
        return PairVerdict(
            chunk_id=chunk.id,
            story_id=story.id,
            label=threshold_match(score, self.threshold),
            provenance=self.provenance,
            score=score,
        )


class KeywordOracleMatcher(PairMatcher):
    """Deterministic lexical matcher: positive iff the story and chunk share
    at least ``min_shared`` content words. No model, no network; the ground
    truth generator for pipeline and blocking tests, and a cheap baseline."""

    provenance = "keyword_oracle"

    def __init__(self, min_shared: int = 2, extra_stopwords: Sequence[str] = ()):
        self.min_shared = min_shared
        self.extra_stopwords = tuple(extra_stopwords)

    def shared_words(self, chunk: Chunk, story: UserStory) -> set[str]:
        extra = set(self.extra_stopwords)
        return (content_words(chunk.text) - extra) & (content_words(story.text) - extra)

    def decision_function(self, pairs: Sequence[PairInput]) -> list[float]:
        return [float(len(self.shared_words(c, s))) for c, s in pairs]

    def match_pair(self, chunk: Chunk, story: UserStory) -> PairVerdict:
        shared = len(self.shared_words(chunk, story))
        return PairVerdict(
            chunk_id=chunk.id,
            story_id=story.id,
            label=1 if shared >= self.min_shared else 0,
            provenance=self.provenance,
            score=float(shared),
        )


@dataclass(frozen=True)
class StoryContextResult:
    """Parsed outcome of one full-context story query."""

    story_id: str
    supported_indices: tuple[int, ...]
    parse_status: str
    dropped_mentions: int
    batch_count: int


class FullContextMatcher(BaseEstimator):
    """Ablation mode: one prompt per story over the whole chunk list.

    Chunks are shown in numbered batches (0-based within the batch) of at
    most ``batch_size``; returned numbers are mapped back to global indices
    through the batch offset. Out-of-range mentions are dropped with a
    warning; an unparseable response (neither integers nor "none") counts
    as no support and is marked defaulted.
    """

    provenance = "full_context"

    def __init__(
        self,
        gateway: ModelGateway,
        batch_size: int = 200,
        prompt_dir: str | Path | None = None,
    ):
        if batch_size < 1:
            raise DataError("batch_size must be >= 1")
        self.gateway = gateway
        self.batch_size = batch_size
        self.prompt_dir = prompt_dir
        self.chat_calls = 0

    @staticmethod
    def parse_indices(raw: str, batch_len: int) -> tuple[list[int], int, str]:
        """Returns (valid local indices, dropped mention count, parse status)."""
        stripped = raw.strip()
        if stripped.lower() == "none":
            return [], 0, PARSE_CLEAN
        mentions = [int(m) for m in _INT_RE.findall(stripped)]
        if not mentions:
            return [], 0, PARSE_DEFAULTED
        valid = sorted({m for m in mentions if 0 <= m < batch_len})
        dropped = len(mentions) - sum(
            1 for m in mentions if 0 <= m < batch_len
        )
        return valid, dropped, PARSE_CLEAN

    def match_story(
        self, story: UserStory, chunks: Sequence[Chunk]
    ) -> StoryContextResult:
        if not chunks:
            raise DataError("full-context matching needs at least one chunk")
        system_prompt = load_prompt("full_context_system", self.prompt_dir)
        user_template = load_prompt("full_context_user", self.prompt_dir)
        supported: set[int] = set()
        dropped_total = 0
        status = PARSE_CLEAN
        batches = range(0, len(chunks), self.batch_size)
        for offset in batches:
            batch = chunks[offset : offset + self.batch_size]
            listing = "\n".join(
                f"{i}. {chunk.text}" for i, chunk in enumerate(batch)
            )
            user_prompt = fill_slots(user_template, story=story.text, chunks=listing)
            raw = self.gateway.chat(system_prompt, user_prompt, temperature=0.0)
            self.chat_calls += 1
            local, dropped, batch_status = self.parse_indices(raw, len(batch))
            if dropped:
                logger.warning(
                    "full-context response for %s mentioned %d out-of-range "
                    "chunk numbers; dropped",
                    story.id,
                    dropped,
                )
            if batch_status == PARSE_DEFAULTED:
                logger.warning(
                    "full-context response for %s was unparseable (%r); "
                    "treating batch as unsupported",
                    story.id,
                    raw[:80],
                )
                status = PARSE_DEFAULTED
            dropped_total += dropped
            supported.update(offset + i for i in local)
        return StoryContextResult(
            story_id=story.id,
            supported_indices=tuple(sorted(supported)),
            parse_status=status,
            dropped_mentions=dropped_total,
            batch_count=len(batches),
        )

    def verdicts(
        self, stories: Sequence[UserStory], chunks: Sequence[Chunk]
    ) -> list[PairVerdict]:
        """Dense verdicts over every (chunk, story) pair."""
        out: list[PairVerdict] = []
        for story in stories:
            result = self.match_story(story, chunks)
            positive = set(result.supported_indices)
            for index, chunk in enumerate(chunks):
                out.append(
                    PairVerdict(
                        chunk_id=chunk.id,
                        story_id=story.id,
                        label=1 if index in positive else 0,
                        provenance=self.provenance,
                        parse_status=result.parse_status,
                    )
                )
        return out


def calibrate_threshold(
    scores: Sequence[float], gold: Sequence[int]
) -> tuple[float, float]:
    """Pick the threshold maximizing macro-F1 of ``score >= t``.

    Candidates are midpoints between consecutive distinct sorted scores plus
    -inf/+inf sentinels (all-positive and all-negative are always reachable).
    Ties resolve to the lowest candidate. Requires both classes in ``gold``.
    """
    if len(scores) != len(gold):
        raise DataError("scores and gold labels differ in length")
    if not scores:
        raise DataError("cannot calibrate on an empty score set")
    if len(set(gold)) < 2:
        raise DataError("calibration needs both labels present in gold")
    distinct = sorted(set(scores))
    candidates = [float("-inf")]
    candidates.extend(
        (low + high) / 2 for low, high in zip(distinct, distinct[1:])
    )
    candidates.append(float("inf"))
    best_threshold = candidates[0]
    best_f1 = -1.0
    for threshold in candidates:
        preds = [threshold_match(s, threshold) for s in scores]
        f1 = macro_f1_scores(preds, list(gold))
        if f1 > best_f1:
            best_f1 = f1
            best_threshold = threshold
    return best_threshold, best_f1


class ThresholdCalibrator(BaseEstimator):
    """fit(scores, labels) -> learns ``threshold_`` and ``best_score_``."""

    def fit(self, scores: Sequence[float], labels: Sequence[int]) -> "ThresholdCalibrator":
        self.threshold_, self.best_score_ = calibrate_threshold(scores, labels)
        return self

    def predict(self, scores: Sequence[float]) -> list[int]:
        if not hasattr(self, "threshold_"):
            raise DataError("ThresholdCalibrator is not fitted; call fit first")
        return [threshold_match(s, self.threshold_) for s in scores]


MATCHER_KINDS = (
    "llm_judge",
    "bi_encoder",
    "external_scorer",
    "keyword_oracle",
    "full_context",
)


def make_matcher(
    kind: str,
    gateway: ModelGateway | None = None,
    *,
    threshold: float = 0.5,
    min_shared: int = 2,
    scorer: Union[str, Callable[[str, str], float], None] = None,
    retry_limit: int = 2,
    seed: int | None = None,
    prompt_dir: str | Path | None = None,
    batch_size: int = 200,
):
    """Build a matcher by name; the CLI and pipeline both come through here."""
    if kind == "llm_judge":
        if gateway is None:
            raise DataError("llm_judge needs a model gateway")
        return LlmJudgeMatcher(
            gateway, retry_limit=retry_limit, seed=seed, prompt_dir=prompt_dir
        )
    if kind == "bi_encoder":
        if gateway is None:
            raise DataError("bi_encoder needs a model gateway")
        return BiEncoderMatcher(gateway, threshold=threshold)
    if kind == "external_scorer":
        if scorer is None:
            raise DataError("external_scorer needs a scorer URL or callable")
        return ExternalScorerMatcher(scorer, threshold=threshold)
    if kind == "keyword_oracle":
        return KeywordOracleMatcher(min_shared=min_shared)
    if kind == "full_context":
        if gateway is None:
            raise DataError("full_context needs a model gateway")
        return FullContextMatcher(gateway, batch_size=batch_size, prompt_dir=prompt_dir)
    raise DataError(f"unknown matcher kind {kind!r}; expected one of {MATCHER_KINDS}")
