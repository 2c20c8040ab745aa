"""Align elicitation transcripts with the user stories they motivate.

The package chunks interview transcripts into overlapping windows, judges
each (chunk, story) pair for support, and reports two coverage metrics:
correctness (stories with at least one supporting chunk) and completeness
(chunks covered by at least one story). Embedding-based blocking prunes
the pair product before the judge runs, a verdict journal makes long runs
resumable, and an annotation service collects human labels for evaluating
the automatic judges.
"""

from .alignment import AlignmentLabel, AlignmentMatrix, Pair
from .annotation import (
    AgreementResult,
    AnnotationSession,
    agreement,
    create_session,
    load_session,
)
from .blocking import (
    CandidateSet,
    SweepPoint,
    block_top_k,
    min_tokens_for_recall,
    recall_against,
    sweep_blocking,
    token_fraction,
)
from .chunking import (
    ChunkingConfig,
    chunk_transcript,
    chunks_overlap,
    make_chunk_id,
    parse_chunk_id,
)
from .corpus import Chunk, Transcript, Turn, UserStory
from .embeddings import cosine_similarity, hash_embedding
from .errors import DataError, TransportError
from .gateway import GatewayConfig, ModelGateway
from .io import (
    load_gold_labels,
    load_stories,
    load_transcript,
    read_chunks_jsonl,
    read_labels_csv,
    write_chunks_jsonl,
    write_labels_csv,
    write_stories,
)
from .matchers import (
    FullContextMatcher,
    KeywordOracleMatcher,
    LlmJudgeMatcher,
    PairVerdict,
    ThresholdCalibrator,
    calibrate_threshold,
    make_matcher,
)
from .metrics import completeness, correctness, fleiss_kappa, macro_f1
from .pipeline import (
    RunConfig,
    compare_story_sets,
    evaluate,
    generate_stories,
    run_alignment,
)
from .reporting import AlignmentReport, build_report, dumps_canonical, load_report
from .service import AnnotationService, build_app

__version__ = "0.1.0"

__all__ = [
    "AgreementResult",
    "AlignmentLabel",
    "AlignmentMatrix",
    "AlignmentReport",
    "AnnotationService",
    "AnnotationSession",
    "CandidateSet",
    "Chunk",
    "ChunkingConfig",
    "DataError",
    "FullContextMatcher",
    "GatewayConfig",
    "KeywordOracleMatcher",
    "LlmJudgeMatcher",
    "ModelGateway",
    "Pair",
    "PairVerdict",
    "RunConfig",
    "SweepPoint",
    "ThresholdCalibrator",
    "Transcript",
    "TransportError",
    "Turn",
    "UserStory",
    "agreement",
    "block_top_k",
    "build_app",
    "build_report",
    "calibrate_threshold",
    "chunk_transcript",
    "chunks_overlap",
    "compare_story_sets",
    "completeness",
    "correctness",
    "cosine_similarity",
    "create_session",
    "dumps_canonical",
    "evaluate",
    "fleiss_kappa",
    "generate_stories",
    "hash_embedding",
    "load_gold_labels",
    "load_report",
    "load_session",
    "load_stories",
    "load_transcript",
    "macro_f1",
    "make_chunk_id",
    "make_matcher",
    "min_tokens_for_recall",
    "parse_chunk_id",
    "read_chunks_jsonl",
    "read_labels_csv",
    "recall_against",
    "run_alignment",
    "sweep_blocking",
    "token_fraction",
    "write_chunks_jsonl",
    "write_labels_csv",
    "write_stories",
]
