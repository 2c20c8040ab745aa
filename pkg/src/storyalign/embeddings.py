"""Vector helpers shared by blocking, matching, and the mock server."""

from __future__ import annotations

import hashlib
import math
import warnings
from typing import Sequence

Vector = tuple[float, ...]


def l2_normalize(values: Sequence[float]) -> Vector:
    norm = math.sqrt(sum(v * v for v in values))
    if norm == 0.0:
        return tuple(values)
    return tuple(v / norm for v in values)


def cosine_similarity(a: Sequence[float], b: Sequence[float]) -> float:
    """Cosine of the angle between two vectors; 0.0 (with a warning) when
    either side has zero norm, so degenerate embeddings rank last instead of
    crashing a sweep."""
    if len(a) != len(b):
        raise ValueError(f"dimension mismatch: {len(a)} vs {len(b)}")
    norm_a = math.sqrt(sum(v * v for v in a))
    norm_b = math.sqrt(sum(v * v for v in b))
    if norm_a == 0.0 or norm_b == 0.0:
        warnings.warn("cosine of a zero vector is undefined; treating as 0.0", stacklevel=2)
        return 0.0
    dot = sum(x * y for x, y in zip(a, b))
    return dot / (norm_a * norm_b)


def hash_embedding(text: str, dim: int = 16) -> Vector:
    """Deterministic bag-of-words embedding.

    Each lowercased token is hashed (md5, stable across processes) into one
    of ``dim`` buckets; the count vector is L2-normalized. Texts sharing
    vocabulary land near each other, which is all the mock server and the
    offline annotation mode need.
    """
    if dim < 1:
        raise ValueError(f"dim must be >= 1, got {dim}")
    counts = [0.0] * dim
    for token in text.lower().split():
        digest = hashlib.md5(token.encode("utf-8")).hexdigest()
        counts[int(digest, 16) % dim] += 1.0
    return l2_normalize(counts)
