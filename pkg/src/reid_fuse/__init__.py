"""Patch-ensemble visual re-identification engine.

Fuses per-patch retrieval scores (reciprocal ranks plus temperature-
scaled cosine similarities) into identity decisions, evaluates them with
mAP and bootstrap statistics, and serves a human match-verification
loop for building cross-camera ground truth.
"""

from .core import (
    EngineConfig,
    FilterParams,
    FusionParams,
    GeometryParams,
    SampleId,
    SplitSpec,
    validate_registry,
)
from .errors import ReidFuseError
from .evaluation import EvalReport, QuerySet, average_precision, sample_queries
from .fusion import FusedScores, fuse, holdout, reciprocal_rank, scaled_similarity
from .gallery import GalleryIndex, SimilarityMatrix, build_index, cosine_matrix, rank_matrix
from .ingest import (
    Dataset,
    EmbeddingSet,
    Track,
    build_split,
    filter_detections,
    foreground_fraction,
    load_dataset,
    load_embeddings,
    parse_tracks,
)
from .records import Detection, SampleRecord, VerifiedMatch
from .stats import (
    BootstrapParams,
    PairwiseResult,
    bonferroni_threshold,
    bootstrap_ci,
    paired_pvalue,
    pairwise_matrix,
)
from .synthbench import SynthSpec, bias_ladder, generate

__version__ = "0.1.0"

__all__ = [
    "BootstrapParams",
    "Dataset",
    "Detection",
    "EmbeddingSet",
    "EngineConfig",
    "EvalReport",
    "FilterParams",
    "FusedScores",
    "FusionParams",
    "GalleryIndex",
    "GeometryParams",
    "PairwiseResult",
    "QuerySet",
    "ReidFuseError",
    "SampleId",
    "SampleRecord",
    "SimilarityMatrix",
    "SplitSpec",
    "SynthSpec",
    "Track",
    "VerifiedMatch",
    "average_precision",
    "bias_ladder",
    "bonferroni_threshold",
    "bootstrap_ci",
    "build_index",
    "build_split",
    "cosine_matrix",
    "filter_detections",
    "foreground_fraction",
    "fuse",
    "generate",
    "holdout",
    "load_dataset",
    "load_embeddings",
    "paired_pvalue",
    "pairwise_matrix",
    "parse_tracks",
    "rank_matrix",
    "reciprocal_rank",
    "sample_queries",
    "scaled_similarity",
    "validate_registry",
]
