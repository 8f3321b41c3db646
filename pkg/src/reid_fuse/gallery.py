"""Per-stream embedding galleries and exact cosine ranking.

Galleries are dense and exact: sizes here stay small enough (~1e4) that
a BLAS matmul beats any approximate index while keeping evaluation
deterministic. Gallery ordering is always sorted by sample id so every
persisted or recomputed index agrees.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SampleId
from .errors import DimensionMismatch, MissingEmbedding
from .ingest import EmbeddingSet


@dataclass
class GalleryIndex:
    """Immutable per-stream gallery: fixed sample order plus unit vectors."""

    stream: str
    sample_ids: list[SampleId]
    vectors: np.ndarray  # (N, D) float32, unit rows

    def __len__(self) -> int:
        return len(self.sample_ids)


@dataclass
class SimilarityMatrix:
    """Query x gallery cosine similarities for one stream."""

    stream: str
    query_ids: list[SampleId]
    gallery_ids: list[SampleId]
    values: np.ndarray  # (N_q, N_g) float64


def build_index(embeddings: EmbeddingSet, split_ids: list[SampleId],
                stream: str) -> GalleryIndex:
    """Assemble a gallery over a split, ordered by sample id.

    Raises MissingEmbedding naming every split sample without a vector
    for the stream.
    """
    ordered = sorted(split_ids)
    missing = [sid for sid in ordered if not embeddings.has(sid, stream)]
    if missing:
        names = ", ".join(str(s) for s in missing[:10])
        suffix = "" if len(missing) <= 10 else f" (+{len(missing) - 10} more)"
        raise MissingEmbedding(f"stream {stream!r} missing embeddings for: {names}{suffix}")
    if ordered:
        vectors = np.stack([embeddings.get(sid, stream) for sid in ordered])
    else:
        vectors = np.zeros((0, embeddings.registry.get(stream, 0)), dtype=np.float32)
    return GalleryIndex(stream=stream, sample_ids=ordered, vectors=vectors)


def cosine_matrix(queries: GalleryIndex, gallery: GalleryIndex) -> SimilarityMatrix:
    """Dense cosine similarities between two indices of the same stream."""
    if queries.stream != gallery.stream:
        raise DimensionMismatch(f"mixing streams {queries.stream!r} and {gallery.stream!r}")
    if queries.vectors.shape[1] != gallery.vectors.shape[1]:
        raise DimensionMismatch(
            f"query dim {queries.vectors.shape[1]} != gallery dim {gallery.vectors.shape[1]}"
        )
    values = queries.vectors.astype(np.float64) @ gallery.vectors.astype(np.float64).T
    return SimilarityMatrix(
        stream=gallery.stream,
        query_ids=list(queries.sample_ids),
        gallery_ids=list(gallery.sample_ids),
        values=values,
    )


def rank_matrix(similarity: np.ndarray, base: int = 1) -> np.ndarray:
    """Per-query ranks; rank `base` is the most similar gallery item.

    Ties break by ascending gallery index (stable argsort), so ranks are
    reproducible regardless of the similarity source.
    """
    sims = np.asarray(similarity, dtype=np.float64)
    order = np.argsort(-sims, axis=1, kind="stable")
    ranks = np.empty_like(order)
    cols = np.arange(sims.shape[1])
    for row, perm in zip(ranks, order):
        row[perm] = cols + base
    return ranks
