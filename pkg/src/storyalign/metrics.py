"""Evaluation metrics over alignment matrices and label maps.

Plain functions, sklearn.metrics style. The two headline numbers:

* correctness: fraction of stories aligned to at least one chunk, i.e. how
  much of the story set is grounded in the source.
* completeness: fraction of chunks aligned to at least one story, i.e. how
  much of the source the story set covers.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .alignment import AlignmentMatrix, Pair
from .errors import DataError


def correctness(matrix: AlignmentMatrix) -> float:
    """|stories supported by >=1 chunk| / |stories|."""
    if not matrix.story_ids:
        raise DataError("correctness is undefined for an empty story set")
    return len(matrix.supported_stories()) / len(matrix.story_ids)


def completeness(matrix: AlignmentMatrix) -> float:
    """|chunks covered by >=1 story| / |chunks|."""
    if not matrix.chunk_ids:
        raise DataError("completeness is undefined for an empty chunk set")
    return len(matrix.covered_chunks()) / len(matrix.chunk_ids)


def _class_f1(pred: Sequence[int], gold: Sequence[int], cls: int) -> float:
    tp = sum(1 for p, g in zip(pred, gold) if p == cls and g == cls)
    fp = sum(1 for p, g in zip(pred, gold) if p == cls and g != cls)
    fn = sum(1 for p, g in zip(pred, gold) if p != cls and g == cls)
    if tp + fp + fn == 0:
        # Class absent from both sides: vacuously perfect.
        return 1.0
    return 2 * tp / (2 * tp + fp + fn)


def macro_f1_scores(pred: Sequence[int], gold: Sequence[int]) -> float:
    """macro_f1 over parallel label vectors (used by threshold calibration)."""
    if len(pred) != len(gold):
        raise DataError("prediction and gold vectors differ in length")
    if not gold:
        raise DataError("macro_f1 is undefined on an empty pair set")
    for value in (*pred, *gold):
        if value not in (0, 1):
            raise DataError(f"labels must be 0 or 1, got {value!r}")
    return (_class_f1(pred, gold, 0) + _class_f1(pred, gold, 1)) / 2


def macro_f1(
    predictions: Mapping[Pair, int], gold: Mapping[Pair, int]
) -> float:
    """Unweighted mean of per-class F1 over classes {0, 1}.

    Both maps must cover exactly the same pairs. A class absent from both
    prediction and gold contributes F1 = 1; absent from gold but predicted
    contributes 0 (the usual empty-intersection F1).
    """
    if set(predictions) != set(gold):
        raise DataError("predictions and gold must cover the same pair set")
    pairs = sorted(gold)
    return macro_f1_scores([predictions[p] for p in pairs], [gold[p] for p in pairs])


@dataclass(frozen=True)
class ClassScores:
    precision: float
    recall: float
    f1: float
    support: int


def classification_breakdown(
    predictions: Mapping[Pair, int], gold: Mapping[Pair, int]
) -> dict[int, ClassScores]:
    """Per-class precision/recall/F1 with the same conventions as macro_f1."""
    if set(predictions) != set(gold):
        raise DataError("predictions and gold must cover the same pair set")
    pairs = sorted(gold)
    pred_vec = [predictions[p] for p in pairs]
    gold_vec = [gold[p] for p in pairs]
    out: dict[int, ClassScores] = {}
    for cls in (0, 1):
        tp = sum(1 for p, g in zip(pred_vec, gold_vec) if p == cls and g == cls)
        fp = sum(1 for p, g in zip(pred_vec, gold_vec) if p == cls and g != cls)
        fn = sum(1 for p, g in zip(pred_vec, gold_vec) if p != cls and g == cls)
        if tp + fp + fn == 0:
            precision = recall = f1 = 1.0
        else:
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * tp / (2 * tp + fp + fn)
        out[cls] = ClassScores(precision, recall, f1, support=tp + fn)
    return out


def fleiss_kappa(ratings: Sequence[Sequence[int]]) -> float:
    """Chance-corrected agreement for a fixed-size rater panel.

    ``ratings`` has one row per item and one column per category; cell values
    are how many raters put the item in that category. Every item must have
    the same number of ratings (>= 2). When every rating across all items
    lands in a single category, expected agreement is 1 and the statistic is
    undefined: returns NaN and warns, so callers can surface the degeneracy
    instead of dividing by zero.
    """
    if not ratings:
        raise DataError("fleiss_kappa needs at least one item")
    n_categories = len(ratings[0])
    if n_categories < 2:
        raise DataError("fleiss_kappa needs at least two categories")
    n_raters = sum(ratings[0])
    if n_raters < 2:
        raise DataError("fleiss_kappa needs at least two ratings per item")
    for i, row in enumerate(ratings):
        if len(row) != n_categories:
            raise DataError(f"item {i}: expected {n_categories} categories")
        if any(count < 0 for count in row):
            raise DataError(f"item {i}: negative rating count")
        if sum(row) != n_raters:
            raise DataError(
                f"item {i}: {sum(row)} ratings, expected {n_raters} "
                "(every item needs the same rater count)"
            )

    n_items = len(ratings)
    observed = sum(
        sum(count * (count - 1) for count in row) / (n_raters * (n_raters - 1))
        for row in ratings
    ) / n_items
    proportions = [
        sum(row[j] for row in ratings) / (n_items * n_raters)
        for j in range(n_categories)
    ]
    expected = sum(p * p for p in proportions)
    if expected >= 1.0:
        warnings.warn(
            "all ratings fall in one category; expected agreement is 1 and "
            "kappa is undefined",
            stacklevel=2,
        )
        return float("nan")
    return (observed - expected) / (1 - expected)


@dataclass(frozen=True)
class DiffReport:
    """Chunks covered by one story set but not the other.

    Keys are the exclusive chunk ids; values list the stories in the owning
    set that cover them, in that set's story order.
    """

    only_a: dict[str, list[str]] = field(default_factory=dict)
    only_b: dict[str, list[str]] = field(default_factory=dict)


def coverage_diff(a: AlignmentMatrix, b: AlignmentMatrix) -> DiffReport:
    """Which parts of the source does one story set reach that the other misses."""
    if set(a.chunk_ids) != set(b.chunk_ids):
        raise DataError(
            "coverage_diff requires both matrices to share one chunk universe"
        )
    covered_a = a.covered_chunks()
    covered_b = b.covered_chunks()
    only_a = {
        chunk_id: a.stories_for(chunk_id)
        for chunk_id in a.chunk_ids
        if chunk_id in covered_a and chunk_id not in covered_b
    }
    only_b = {
        chunk_id: b.stories_for(chunk_id)
        for chunk_id in b.chunk_ids
        if chunk_id in covered_b and chunk_id not in covered_a
    }
    return DiffReport(only_a=only_a, only_b=only_b)
