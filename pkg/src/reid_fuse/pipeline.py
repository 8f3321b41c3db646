"""End-to-end glue: datasets to score artifacts to evaluation reports.

Shared by the CLI, the verification service, and the synthetic
benchmark so they all rank, fuse, and evaluate identically.
"""

from __future__ import annotations

import numpy as np

from .core import FusionParams, SampleId
from .errors import GalleryNotBuilt, QuerySetMismatch
from .evaluation import EvalReport, QuerySet, sample_queries, test_eval, validation_eval
from .fusion import FusedScores, fuse_from_cosines
from .gallery import GalleryIndex, build_index, cosine_matrix
from .ingest import Dataset
from .records import ScoresArtifact, VerifiedMatch


def build_indices(dataset: Dataset, split: str, streams) -> dict[str, GalleryIndex]:
    ids = dataset.split_ids(split)
    if not ids:
        raise GalleryNotBuilt(f"split {split!r} has no samples")
    return {stream: build_index(dataset.embeddings, ids, stream) for stream in streams}


def compute_scores(dataset: Dataset, query_split: str, gallery_split: str,
                   params: FusionParams) -> ScoresArtifact:
    """Per-stream cosine matrices between two splits, full (unsampled) rows."""
    query_indices = build_indices(dataset, query_split, params.streams)
    if gallery_split == query_split:
        gallery_indices = query_indices
    else:
        gallery_indices = build_indices(dataset, gallery_split, params.streams)
    cosines = {
        stream: cosine_matrix(query_indices[stream], gallery_indices[stream]).values
        for stream in params.streams
    }
    any_stream = params.streams[0]
    return ScoresArtifact(
        query_split=query_split,
        gallery_split=gallery_split,
        query_ids=list(query_indices[any_stream].sample_ids),
        gallery_ids=list(gallery_indices[any_stream].sample_ids),
        cosines=cosines,
        fusion=params,
    )


def restrict_scores(artifact: ScoresArtifact, query_ids: list[SampleId],
                    gallery_ids: list[SampleId] | None = None) -> ScoresArtifact:
    """Slice an artifact down to chosen query rows (and gallery columns)."""
    row_of = {sid: i for i, sid in enumerate(artifact.query_ids)}
    rows = np.array([row_of[sid] for sid in query_ids])
    if gallery_ids is None:
        gallery_ids = artifact.gallery_ids
        cols = slice(None)
    else:
        col_of = {sid: j for j, sid in enumerate(artifact.gallery_ids)}
        cols = np.array([col_of[sid] for sid in gallery_ids])
    cosines = {s: m[rows][:, cols] for s, m in artifact.cosines.items()}
    return ScoresArtifact(
        query_split=artifact.query_split,
        gallery_split=artifact.gallery_split,
        query_ids=list(query_ids),
        gallery_ids=list(gallery_ids),
        cosines=cosines,
        fusion=artifact.fusion,
    )


def fused_from_artifact(artifact: ScoresArtifact,
                        params: FusionParams | None = None) -> FusedScores:
    params = params or artifact.fusion
    return fuse_from_cosines(artifact.cosines, params,
                             query_ids=artifact.query_ids,
                             gallery_ids=artifact.gallery_ids)


def evaluate_validation(artifact: ScoresArtifact, per_id: int = 5, seed: int = 0,
                        full_gallery: bool = False, model: str = "ensemble",
                        params: FusionParams | None = None) -> EvalReport:
    """Sample queries per trajectory and run within-split evaluation."""
    if artifact.gallery_split != artifact.query_split:
        raise QuerySetMismatch(
            f"validation mode needs a within-split artifact; this one ranks "
            f"{artifact.query_split!r} against {artifact.gallery_split!r} "
            f"(retrieve with --gallery-split {artifact.query_split})"
        )
    params = params or artifact.fusion
    query_set = sample_queries(
        artifact.query_ids, per_id=per_id, seed=seed,
        gallery_ids=artifact.gallery_ids if full_gallery else None,
    )
    sub = restrict_scores(artifact, query_set.queries, query_set.gallery_ids)
    fused = fused_from_artifact(sub, params)
    return validation_eval(fused, query_set, model=model,
                           query_split=artifact.query_split, params=params)


def evaluate_test(artifact: ScoresArtifact, matches: list[VerifiedMatch],
                  per_id: int = 5, seed: int = 0, model: str = "ensemble",
                  params: FusionParams | None = None,
                  sample: bool = True) -> EvalReport:
    """Sample cross-camera queries and score them against verified matches."""
    params = params or artifact.fusion
    if sample:
        query_set = sample_queries(artifact.query_ids, per_id=per_id, seed=seed)
        sub = restrict_scores(artifact, query_set.queries)
    else:
        sub = artifact
    fused = fused_from_artifact(sub, params)
    return test_eval(fused, matches, model=model,
                     query_split=artifact.query_split,
                     gallery_split=artifact.gallery_split, params=params)


def single_stream_eval(artifact: ScoresArtifact, stream: str, mode: str,
                       matches: list[VerifiedMatch] | None = None,
                       per_id: int = 5, seed: int = 0) -> EvalReport:
    """Evaluate one stream by raw cosine ranking (no fusion terms)."""
    single = FusionParams(lam=artifact.fusion.lam, tau=artifact.fusion.tau,
                          k=artifact.fusion.k, streams=(stream,))
    if mode == "val":
        return evaluate_validation(artifact, per_id=per_id, seed=seed,
                                   model=stream, params=single)
    return evaluate_test(artifact, matches or [], per_id=per_id, seed=seed,
                         model=stream, params=single)
