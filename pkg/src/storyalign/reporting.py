"""Alignment report assembly and deterministic serialization.

Two runs over the same inputs must produce byte-identical report files, so
the emitter here fixes float formatting (six decimal places), preserves
insertion order, and never depends on hash ordering.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Sequence

from .alignment import AlignmentMatrix
from .chunking import parse_chunk_id
from .errors import DataError
from .metrics import completeness, correctness

import json as _json


def _format_float(value: float) -> str:
    if math.isnan(value):
        return '"nan"'
    if math.isinf(value):
        return '"inf"' if value > 0 else '"-inf"'
    return f"{value:.6f}"


def dumps_canonical(obj: Any, indent: int = 2, _level: int = 0) -> str:
    """JSON with fixed float formatting and stable (insertion) key order."""
    pad = " " * (indent * _level)
    inner_pad = " " * (indent * (_level + 1))
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        return _format_float(obj)
    if isinstance(obj, str):
        return _json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, Mapping):
        if not obj:
            return "{}"
        items = ",\n".join(
            f"{inner_pad}{_json.dumps(str(key), ensure_ascii=False)}: "
            f"{dumps_canonical(value, indent, _level + 1)}"
            for key, value in obj.items()
        )
        return "{\n" + items + "\n" + pad + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        items = ",\n".join(
            f"{inner_pad}{dumps_canonical(value, indent, _level + 1)}" for value in obj
        )
        return "[\n" + items + "\n" + pad + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


@dataclass(frozen=True)
class StoryOutcome:
    supported: bool
    evidence: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"supported": self.supported, "evidence": list(self.evidence)}


@dataclass(frozen=True)
class ChunkOutcome:
    covered: bool
    stories: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {"covered": self.covered, "stories": list(self.stories)}


@dataclass(frozen=True)
class AlignmentReport:
    correctness: float
    completeness: float
    per_story: dict[str, StoryOutcome]
    per_chunk: dict[str, ChunkOutcome]
    token_cost: int
    matcher_calls: int
    judged_pairs: int
    pruned_pairs: int
    parse_failures: int
    warnings: tuple[str, ...] = ()
    config_echo: dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> dict[str, Any]:
        return {
            "correctness": self.correctness,
            "completeness": self.completeness,
            "per_story": {sid: out.to_dict() for sid, out in self.per_story.items()},
            "per_chunk": {cid: out.to_dict() for cid, out in self.per_chunk.items()},
            "token_cost": self.token_cost,
            "matcher_calls": self.matcher_calls,
            "judged_pairs": self.judged_pairs,
            "pruned_pairs": self.pruned_pairs,
            "parse_failures": self.parse_failures,
            "warnings": list(self.warnings),
            "config_echo": self.config_echo,
        }

    def to_json(self) -> str:
        return dumps_canonical(self.to_dict()) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")

    @property
    def supported_story_count(self) -> int:
        return sum(1 for out in self.per_story.values() if out.supported)

    @property
    def covered_chunk_count(self) -> int:
        return sum(1 for out in self.per_chunk.values() if out.covered)


def _chunk_sort_key(chunk_id: str) -> tuple[str, str, int, int]:
    transcript_id, strategy, start, end = parse_chunk_id(chunk_id)
    return (transcript_id, strategy, start, end)


def build_report(
    matrix: AlignmentMatrix,
    *,
    token_cost: int = 0,
    matcher_calls: int = 0,
    pruned_pairs: int = 0,
    parse_failures: int = 0,
    warnings: Sequence[str] = (),
    config_echo: Mapping[str, Any] | None = None,
) -> AlignmentReport:
    """Assemble a report from a judged matrix; evidence is listed in chunk
    position order so output is stable regardless of judging order."""
    per_story: dict[str, StoryOutcome] = {}
    for story_id in matrix.story_ids:
        evidence = sorted(matrix.evidence_for(story_id), key=_chunk_sort_key)
        per_story[story_id] = StoryOutcome(supported=bool(evidence), evidence=tuple(evidence))
    per_chunk: dict[str, ChunkOutcome] = {}
    for chunk_id in matrix.chunk_ids:
        stories = tuple(sorted(matrix.stories_for(chunk_id)))
        per_chunk[chunk_id] = ChunkOutcome(covered=bool(stories), stories=stories)
    return AlignmentReport(
        correctness=correctness(matrix),
        completeness=completeness(matrix),
        per_story=per_story,
        per_chunk=per_chunk,
        token_cost=token_cost,
        matcher_calls=matcher_calls,
        judged_pairs=len(matrix.judged),
        pruned_pairs=pruned_pairs,
        parse_failures=parse_failures,
        warnings=tuple(warnings),
        config_echo=dict(config_echo or {}),
    )


def report_from_dict(payload: Mapping[str, Any]) -> AlignmentReport:
    try:
        per_story = {
            sid: StoryOutcome(
                supported=bool(out["supported"]), evidence=tuple(out["evidence"])
            )
            for sid, out in payload["per_story"].items()
        }
        per_chunk = {
            cid: ChunkOutcome(covered=bool(out["covered"]), stories=tuple(out["stories"]))
            for cid, out in payload["per_chunk"].items()
        }
        return AlignmentReport(
            correctness=float(payload["correctness"]),
            completeness=float(payload["completeness"]),
            per_story=per_story,
            per_chunk=per_chunk,
            token_cost=int(payload["token_cost"]),
            matcher_calls=int(payload["matcher_calls"]),
            judged_pairs=int(payload["judged_pairs"]),
            pruned_pairs=int(payload["pruned_pairs"]),
            parse_failures=int(payload["parse_failures"]),
            warnings=tuple(payload.get("warnings", ())),
            config_echo=dict(payload.get("config_echo", {})),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed report payload: {exc}") from None


def load_report(path: str | Path) -> AlignmentReport:
    path = Path(path)
    if not path.exists():
        raise DataError(f"report file not found: {path}")
    try:
        payload = _json.loads(path.read_text(encoding="utf-8"))
    except _json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON ({exc.msg})") from None
    if not isinstance(payload, dict):
        raise DataError(f"{path}: expected a JSON object")
    return report_from_dict(payload)


def matrix_from_report(report: AlignmentReport) -> AlignmentMatrix:
    """Rebuild a matrix from report evidence.

    Only positive pairs are itemized in a report, so the reconstructed
    judged set equals the positive set; metrics that need the full judged
    set should come from the original run, not from this round trip.
    """
    positives = frozenset(
        (chunk_id, story_id)
        for story_id, outcome in report.per_story.items()
        for chunk_id in outcome.evidence
    )
    return AlignmentMatrix(
        chunk_ids=tuple(report.per_chunk),
        story_ids=tuple(report.per_story),
        judged=positives,
        positives=positives,
    )


def normalized_for_comparison(report_json: str) -> str:
    """Report bytes with the config echo blanked, for cross-config equality
    checks (for example direct versus blocked-with-full-K runs)."""
    payload = _json.loads(report_json)
    payload["config_echo"] = {}
    payload["pruned_pairs"] = 0
    return dumps_canonical(payload) + "\n"
