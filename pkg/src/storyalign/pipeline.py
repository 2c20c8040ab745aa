"""End-to-end runs: chunk, judge, score, and report.

The judging loop walks pairs in one canonical order (stories in input
order, chunks in position order) no matter how candidates were selected,
so a run with blocking at full K produces the same report bytes as a run
without blocking. Verdicts can be journaled to disk as they land; an
interrupted run resumed from its journal converges on the identical
report.
"""

from __future__ import annotations

import hashlib
import json
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping, Sequence, TextIO, Union

from .alignment import AlignmentMatrix, Pair
from .blocking import block_top_k
from .chunking import ChunkingConfig, chunk_transcript
from .corpus import Chunk, Transcript, UserStory
from .errors import DataError
from .gateway import ModelGateway
from .io import load_stories, load_transcript
from .matchers import (
    PARSE_DEFAULTED,
    FullContextMatcher,
    PairVerdict,
    fill_slots,
    load_prompt,
    make_matcher,
)
from .metrics import ClassScores, classification_breakdown, coverage_diff, DiffReport
from .reporting import AlignmentReport, build_report, dumps_canonical, matrix_from_report
from .tokens import count_tokens

logger = logging.getLogger(__name__)

_BULLET_RE = re.compile(r"^(?:[-*•]\s+|\d+[.)]\s+)")


@dataclass
class RunConfig:
    """Everything a full alignment run needs, file paths included."""

    transcript_paths: tuple[str, ...] = ()
    stories_path: str | None = None
    transcript_format: str = "auto"
    stories_format: str = "auto"
    chunking: ChunkingConfig = field(default_factory=ChunkingConfig)
    matcher: str = "llm_judge"
    threshold: float = 0.5
    min_shared: int = 2
    scorer: Union[str, Callable[[str, str], float], None] = None
    retry_limit: int = 2
    batch_size: int = 200
    blocking_k: int | None = None
    per_pair_overhead: int = 0
    seed: int | None = None
    prompt_dir: str | None = None
    out_path: str | None = None
    journal_path: str | None = None
    resume: bool = False


def _load_corpus(config: RunConfig) -> tuple[list[Chunk], list[Transcript]]:
    if not config.transcript_paths:
        raise DataError("no transcripts given")
    transcripts = [
        load_transcript(path, fmt=config.transcript_format)
        for path in config.transcript_paths
    ]
    seen: set[str] = set()
    for transcript in transcripts:
        if transcript.id in seen:
            raise DataError(f"duplicate transcript id {transcript.id!r}")
        seen.add(transcript.id)
    chunks: list[Chunk] = []
    for transcript in transcripts:
        chunks.extend(chunk_transcript(transcript, config.chunking))
    return chunks, transcripts


def _pair_cost(chunk: Chunk, story_tokens: int, overhead: int) -> int:
    return chunk.token_count + story_tokens + overhead


def _config_digest(
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    config: RunConfig,
) -> str:
    basis = {
        "chunk_ids": [c.id for c in chunks],
        "story_ids": [s.id for s in stories],
        "matcher": config.matcher,
        "threshold": config.threshold,
        "min_shared": config.min_shared,
        "retry_limit": config.retry_limit,
        "blocking_k": config.blocking_k,
        "per_pair_overhead": config.per_pair_overhead,
        "seed": config.seed,
    }
    return hashlib.sha256(dumps_canonical(basis).encode("utf-8")).hexdigest()


class VerdictJournal:
    """Append-only JSONL of judged pairs, guarded by a config digest.

    The first line names the digest of the run shape; resuming against a
    journal written under different inputs fails instead of silently mixing
    verdicts from two runs.
    """

    def __init__(self, path: str | Path, digest: str, resume: bool):
        self.path = Path(path)
        self.digest = digest
        self.seen: dict[Pair, PairVerdict] = {}
        self._handle: TextIO | None = None
        if self.path.exists():
            if not resume:
                raise DataError(
                    f"journal {self.path} already exists; pass resume=True to "
                    "continue it or remove the file"
                )
            self._read_existing()
            self._handle = self.path.open("a", encoding="utf-8")
        else:
            self._handle = self.path.open("w", encoding="utf-8")
            self._write_line({"kind": "journal", "digest": digest})

    def _read_existing(self) -> None:
        saw_header = False
        with self.path.open(encoding="utf-8") as handle:
            for line_no, line in enumerate(handle, start=1):
                if not line.strip():
                    continue
                try:
                    record = json.loads(line)
                except json.JSONDecodeError:
                    # A torn final line from a killed run is expected; the
                    # pair is simply re-judged.
                    logger.warning(
                        "%s:%d: discarding torn journal line", self.path, line_no
                    )
                    continue
                kind = record.get("kind")
                if kind == "journal":
                    saw_header = True
                    if record.get("digest") != self.digest:
                        raise DataError(
                            f"journal {self.path} was written for a different "
                            "run configuration"
                        )
                elif kind == "verdict":
                    verdict = PairVerdict(
                        chunk_id=record["chunk_id"],
                        story_id=record["story_id"],
                        label=int(record["label"]),
                        provenance=record.get("provenance", "journal"),
                        score=record.get("score"),
                        parse_status=record.get("parse_status", "clean"),
                        attempts=int(record.get("attempts", 1)),
                    )
                    self.seen[(verdict.chunk_id, verdict.story_id)] = verdict
                else:
                    raise DataError(
                        f"{self.path}:{line_no}: unknown journal record kind {kind!r}"
                    )
        if not saw_header:
            raise DataError(
                f"journal {self.path} has no header record; refusing to resume"
            )

    def _write_line(self, record: dict) -> None:
        assert self._handle is not None
        self._handle.write(json.dumps(record, ensure_ascii=False) + "\n")
        self._handle.flush()

    def record(self, verdict: PairVerdict) -> None:
        self.seen[(verdict.chunk_id, verdict.story_id)] = verdict
        self._write_line(
            {
                "kind": "verdict",
                "chunk_id": verdict.chunk_id,
                "story_id": verdict.story_id,
                "label": verdict.label,
                "score": verdict.score,
                "parse_status": verdict.parse_status,
                "provenance": verdict.provenance,
                "attempts": verdict.attempts,
            }
        )

    def close(self) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def _config_echo(
    config: RunConfig, gateway: ModelGateway | None
) -> dict[str, Any]:
    strategy, window, stride = config.chunking.resolved()
    echo: dict[str, Any] = {
        "transcripts": list(config.transcript_paths),
        "stories": config.stories_path,
        "chunking": {"strategy": strategy, "window": window, "stride": stride},
        "matcher": {
            "kind": config.matcher,
            "threshold": config.threshold,
            "min_shared": config.min_shared,
            "retry_limit": config.retry_limit,
            "batch_size": config.batch_size,
            "seed": config.seed,
        },
        "blocking_k": config.blocking_k,
        "per_pair_overhead": config.per_pair_overhead,
    }
    if gateway is not None:
        echo["models"] = {
            "chat": gateway.config.chat_model,
            "embed": gateway.config.embed_model,
        }
    return echo


def run_alignment(
    config: RunConfig,
    gateway: ModelGateway | None = None,
    *,
    matcher=None,
    chunks: Sequence[Chunk] | None = None,
    stories: Sequence[UserStory] | None = None,
) -> AlignmentReport:
    """Chunk the corpus, judge candidate pairs, and assemble the report.

    ``chunks`` and ``stories`` may be passed directly to bypass file
    loading; otherwise they come from the paths in ``config``.
    """
    if chunks is None:
        chunks, _ = _load_corpus(config)
    else:
        chunks = list(chunks)
    if stories is None:
        if config.stories_path is None:
            raise DataError("no stories given")
        stories = load_stories(config.stories_path, fmt=config.stories_format)
    else:
        stories = list(stories)
    if not chunks:
        raise DataError("corpus produced no chunks")
    if not stories:
        raise DataError("no stories to align")

    if matcher is None:
        matcher = make_matcher(
            config.matcher,
            gateway,
            threshold=config.threshold,
            min_shared=config.min_shared,
            scorer=config.scorer,
            retry_limit=config.retry_limit,
            seed=config.seed,
            prompt_dir=config.prompt_dir,
            batch_size=config.batch_size,
        )

    if isinstance(matcher, FullContextMatcher):
        if config.blocking_k is not None:
            raise DataError(
                "blocking does not compose with full_context; it reads every "
                "chunk regardless"
            )
        if config.journal_path is not None:
            raise DataError(
                "journaling is per pair and does not apply to full_context"
            )
        return _run_full_context(config, matcher, chunks, stories, gateway)

    total_pairs = len(chunks) * len(stories)
    pruned = 0
    candidate_pairs: frozenset[Pair] | None = None
    if config.blocking_k is not None:
        if gateway is None:
            raise DataError("blocking needs a model gateway for embeddings")
        texts = {chunk.id: chunk.text for chunk in chunks}
        for story in stories:
            if story.id in texts:
                raise DataError(
                    f"story id {story.id!r} collides with a chunk id"
                )
            texts[story.id] = story.text
        embeddings = gateway.embed_by_id(texts)
        candidates = block_top_k(stories, chunks, embeddings, config.blocking_k)
        candidate_pairs = candidates.pairs
        pruned = total_pairs - len(candidate_pairs)

    journal: VerdictJournal | None = None
    if config.journal_path is not None:
        digest = _config_digest(chunks, stories, config)
        journal = VerdictJournal(config.journal_path, digest, config.resume)

    story_tokens = {story.id: count_tokens(story.text) for story in stories}
    matcher.prepare(chunks, stories)

    verdicts: list[PairVerdict] = []
    token_cost = 0
    try:
        for story in stories:
            for chunk in chunks:
                pair = (chunk.id, story.id)
                if candidate_pairs is not None and pair not in candidate_pairs:
                    continue
                if journal is not None and pair in journal.seen:
                    verdict = journal.seen[pair]
                else:
                    verdict = matcher.match_pair(chunk, story)
                    if journal is not None:
                        journal.record(verdict)
                verdicts.append(verdict)
                token_cost += _pair_cost(
                    chunk, story_tokens[story.id], config.per_pair_overhead
                )
    finally:
        if journal is not None:
            journal.close()

    parse_failures = sum(1 for v in verdicts if v.parse_status == PARSE_DEFAULTED)
    warnings: list[str] = []
    if pruned > 0:
        warnings.append(
            f"blocking (K={config.blocking_k}) pruned {pruned} of "
            f"{total_pairs} pairs"
        )
    if parse_failures > 0:
        warnings.append(
            f"{parse_failures} model responses defaulted to label 0"
        )

    matrix = AlignmentMatrix.from_label_map(
        [c.id for c in chunks],
        [s.id for s in stories],
        {(v.chunk_id, v.story_id): v.label for v in verdicts},
    )
    report = build_report(
        matrix,
        token_cost=token_cost,
        matcher_calls=len(verdicts),
        pruned_pairs=pruned,
        parse_failures=parse_failures,
        warnings=warnings,
        config_echo=_config_echo(config, gateway),
    )
    if config.out_path is not None:
        report.write(config.out_path)
    return report


def _run_full_context(
    config: RunConfig,
    matcher: FullContextMatcher,
    chunks: Sequence[Chunk],
    stories: Sequence[UserStory],
    gateway: ModelGateway | None,
) -> AlignmentReport:
    verdicts = matcher.verdicts(stories, chunks)
    total_chunk_tokens = sum(chunk.token_count for chunk in chunks)
    batches = -(-len(chunks) // matcher.batch_size)
    token_cost = sum(
        total_chunk_tokens + count_tokens(story.text) * batches
        for story in stories
    )
    defaulted_stories = {
        v.story_id for v in verdicts if v.parse_status == PARSE_DEFAULTED
    }
    warnings: list[str] = []
    if defaulted_stories:
        warnings.append(
            f"{len(defaulted_stories)} full-context responses were "
            "unparseable; affected batches treated as unsupported"
        )
    matrix = AlignmentMatrix.from_label_map(
        [c.id for c in chunks],
        [s.id for s in stories],
        {(v.chunk_id, v.story_id): v.label for v in verdicts},
    )
    report = build_report(
        matrix,
        token_cost=token_cost,
        matcher_calls=matcher.chat_calls,
        pruned_pairs=0,
        parse_failures=len(defaulted_stories),
        warnings=warnings,
        config_echo=_config_echo(config, gateway),
    )
    if config.out_path is not None:
        report.write(config.out_path)
    return report


@dataclass(frozen=True)
class EvalReport:
    """Predictions scored against a gold pair set."""

    macro_f1: float
    per_class: dict[int, ClassScores]
    confusion: dict[str, int]
    pair_count: int
    missing_predictions: int
    parse_failures: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "macro_f1": self.macro_f1,
            "per_class": {
                str(cls): {
                    "precision": scores.precision,
                    "recall": scores.recall,
                    "f1": scores.f1,
                    "support": scores.support,
                }
                for cls, scores in sorted(self.per_class.items())
            },
            "confusion": dict(self.confusion),
            "pair_count": self.pair_count,
            "missing_predictions": self.missing_predictions,
            "parse_failures": self.parse_failures,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict()) + "\n"


def evaluate(
    predictions: Mapping[Pair, int],
    gold: Mapping[Pair, int],
    parse_failures: int = 0,
) -> EvalReport:
    """Score predictions over the gold pair set; a pair without a
    prediction counts as label 0, same as an unjudged pair in the metrics."""
    if not gold:
        raise DataError("gold label set is empty")
    filled = {pair: predictions.get(pair, 0) for pair in gold}
    missing = sum(1 for pair in gold if pair not in predictions)
    breakdown = classification_breakdown(filled, gold)
    pairs = sorted(gold)
    tp = sum(1 for p in pairs if filled[p] == 1 and gold[p] == 1)
    fp = sum(1 for p in pairs if filled[p] == 1 and gold[p] == 0)
    fn = sum(1 for p in pairs if filled[p] == 0 and gold[p] == 1)
    tn = sum(1 for p in pairs if filled[p] == 0 and gold[p] == 0)
    return EvalReport(
        macro_f1=(breakdown[0].f1 + breakdown[1].f1) / 2,
        per_class=breakdown,
        confusion={"tp": tp, "fp": fp, "fn": fn, "tn": tn},
        pair_count=len(gold),
        missing_predictions=missing,
        parse_failures=parse_failures,
    )


def predictions_from_report(report: AlignmentReport) -> dict[Pair, int]:
    """Positive pairs from a report; everything else is an implicit 0."""
    return {
        (chunk_id, story_id): 1
        for story_id, outcome in report.per_story.items()
        for chunk_id in outcome.evidence
    }


@dataclass(frozen=True)
class GenerationResult:
    """Stories drafted by a chat model from transcript text."""

    stories: tuple[UserStory, ...]
    raw_response: str
    truncated: bool
    bullets_stripped: int
    non_template_count: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "stories": [{"id": s.id, "text": s.text} for s in self.stories],
            "truncated": self.truncated,
            "bullets_stripped": self.bullets_stripped,
            "non_template_count": self.non_template_count,
        }


def generate_stories(
    transcripts: Sequence[Transcript],
    gateway: ModelGateway,
    max_stories: int = 50,
    temperature: float = 0.0,
    seed: int | None = None,
    prompt_dir: str | Path | None = None,
) -> GenerationResult:
    """One chat call per corpus; each non-empty response line becomes a
    story. Leading bullets or numbering are stripped (counted), lines that
    do not follow the role/goal template are kept but counted, and output
    beyond ``max_stories`` is dropped with the truncation flag set."""
    if not transcripts:
        raise DataError("no transcripts to generate from")
    if max_stories < 1:
        raise DataError("max_stories must be >= 1")
    system_prompt = load_prompt("generation_system", prompt_dir)
    user_template = load_prompt("generation_user", prompt_dir)
    rendered = "\n\n".join(t.render() for t in transcripts)
    user_prompt = fill_slots(
        user_template, transcript=rendered, max_stories=str(max_stories)
    )
    raw = gateway.chat(
        system_prompt, user_prompt, temperature=temperature, seed=seed
    )
    stories: list[UserStory] = []
    bullets_stripped = 0
    non_template = 0
    for line in raw.splitlines():
        text = line.strip()
        if not text:
            continue
        cleaned = _BULLET_RE.sub("", text)
        if cleaned != text:
            bullets_stripped += 1
        if not cleaned:
            continue
        story = UserStory.from_text(f"s{len(stories) + 1}", cleaned)
        if story.role is None:
            non_template += 1
            logger.warning(
                "generated line does not follow the story template: %r",
                cleaned[:80],
            )
        stories.append(story)
    truncated = len(stories) > max_stories
    if truncated:
        stories = stories[:max_stories]
    if not stories:
        raise DataError("model response contained no usable story lines")
    return GenerationResult(
        stories=tuple(stories),
        raw_response=raw,
        truncated=truncated,
        bullets_stripped=bullets_stripped,
        non_template_count=non_template,
    )


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    correctness: float
    completeness: float
    supported_stories: int
    story_count: int
    covered_chunks: int
    chunk_count: int
    matcher_calls: int
    token_cost: int

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "correctness": self.correctness,
            "completeness": self.completeness,
            "supported_stories": self.supported_stories,
            "story_count": self.story_count,
            "covered_chunks": self.covered_chunks,
            "chunk_count": self.chunk_count,
            "matcher_calls": self.matcher_calls,
            "token_cost": self.token_cost,
        }


@dataclass(frozen=True)
class ComparisonResult:
    rows: tuple[ComparisonRow, ...]
    diff: DiffReport | None
    diff_names: tuple[str, str] | None

    def to_dict(self) -> dict[str, Any]:
        payload: dict[str, Any] = {"rows": [row.to_dict() for row in self.rows]}
        if self.diff is not None and self.diff_names is not None:
            payload["diff"] = {
                "between": list(self.diff_names),
                "only_first": {
                    cid: list(stories) for cid, stories in self.diff.only_a.items()
                },
                "only_second": {
                    cid: list(stories) for cid, stories in self.diff.only_b.items()
                },
            }
        return payload

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict()) + "\n"


def compare_story_sets(
    named_reports: Sequence[tuple[str, AlignmentReport]],
    diff_pair: tuple[str, str] | None = None,
) -> ComparisonResult:
    """Side-by-side metrics for story sets judged over one chunk universe,
    plus a coverage diff between two of them (the first two by default)."""
    if not named_reports:
        raise DataError("nothing to compare")
    names = [name for name, _ in named_reports]
    if len(set(names)) != len(names):
        raise DataError("report names must be unique")
    universe = set(named_reports[0][1].per_chunk)
    for name, report in named_reports[1:]:
        if set(report.per_chunk) != universe:
            raise DataError(
                f"report {name!r} covers a different chunk universe; "
                "comparisons need a shared corpus"
            )
    rows = tuple(
        ComparisonRow(
            name=name,
            correctness=report.correctness,
            completeness=report.completeness,
            supported_stories=report.supported_story_count,
            story_count=len(report.per_story),
            covered_chunks=report.covered_chunk_count,
            chunk_count=len(report.per_chunk),
            matcher_calls=report.matcher_calls,
            token_cost=report.token_cost,
        )
        for name, report in named_reports
    )
    diff = None
    diff_names = None
    if diff_pair is None and len(named_reports) >= 2:
        diff_pair = (names[0], names[1])
    if diff_pair is not None:
        by_name = dict(named_reports)
        for name in diff_pair:
            if name not in by_name:
                raise DataError(f"no report named {name!r} to diff")
        diff = coverage_diff(
            matrix_from_report(by_name[diff_pair[0]]),
            matrix_from_report(by_name[diff_pair[1]]),
        )
        diff_names = diff_pair
    return ComparisonResult(rows=rows, diff=diff, diff_names=diff_names)
