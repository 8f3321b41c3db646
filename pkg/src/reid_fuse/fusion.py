"""Score fusion: temperature-scaled similarities plus reciprocal ranks.

The fused score of query i and gallery j over the configured streams is

    S_hat[i, j] = lam * sum_p rr_p[i, j] + (1 - lam) * sum_p s_p[i, j]

where rr_p = 1 / (k + rank_p) and s_p is exp(-(1 - cos_p) / tau)
min-max normalized per query row. Degenerate rows (max == min) map to
zeros: a constant per-stream contribution cannot change within-query
ordering, and zero keeps the cross-stream sums conservative.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FusionParams, SampleId
from .errors import EmptyStreamSet, MissingStream, ShapeMismatch, UnknownStream
from .gallery import rank_matrix

LAMBDA_GRID = (0.0, 0.2, 0.4, 0.6, 0.75, 0.8, 1.0)
TAU_GRID = (0.2, 0.5, 0.7, 1.0, 2.0, 5.0)
K_GRID = (1, 10, 20, 30, 60, 100, 150, 200, 300, 500)


@dataclass
class FusedScores:
    """Fused matrix plus the per-stream intermediates it was built from."""

    values: np.ndarray  # (N_q, N_g) fused scores
    params: FusionParams
    scaled: dict[str, np.ndarray] = field(default_factory=dict)
    reciprocal: dict[str, np.ndarray] = field(default_factory=dict)
    query_ids: list[SampleId] | None = None
    gallery_ids: list[SampleId] | None = None


def temperature_scale(cosines: np.ndarray, tau: float) -> np.ndarray:
    """exp(-(1 - cos) / tau), elementwise, before any normalization."""
    if tau <= 0:
        raise ValueError(f"tau must be > 0, got {tau}")
    return np.exp(-(1.0 - np.asarray(cosines, dtype=np.float64)) / tau)


def minmax_rows(matrix: np.ndarray) -> np.ndarray:
    """Map each row to [0, 1]; constant rows map to zeros."""
    values = np.asarray(matrix, dtype=np.float64)
    if values.size == 0:
        return values.copy()
    lo = values.min(axis=1, keepdims=True)
    hi = values.max(axis=1, keepdims=True)
    span = hi - lo
    flat = (span == 0.0).ravel()
    span[span == 0.0] = 1.0
    out = (values - lo) / span
    out[flat, :] = 0.0
    return out


def scaled_similarity(cosines: np.ndarray, tau: float) -> np.ndarray:
    """Temperature-scaled similarities, min-max normalized per query row."""
    return minmax_rows(temperature_scale(cosines, tau))


def reciprocal_rank(ranks: np.ndarray, k: int) -> np.ndarray:
    """Elementwise 1 / (k + rank)."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return 1.0 / (k + np.asarray(ranks, dtype=np.float64))


def fuse(scaled: dict[str, np.ndarray], reciprocal: dict[str, np.ndarray],
         params: FusionParams) -> FusedScores:
    """Weighted sum of per-stream reciprocal ranks and scaled similarities."""
    streams = params.streams
    if not streams:
        raise EmptyStreamSet("fusion requires at least one stream")
    shape = None
    for stream in streams:
        if stream not in scaled or stream not in reciprocal:
            raise MissingStream(f"stream {stream!r} missing from fusion inputs")
        if shape is None:
            shape = scaled[stream].shape
        if scaled[stream].shape != shape or reciprocal[stream].shape != shape:
            raise ShapeMismatch(
                f"stream {stream!r} matrices have shape {scaled[stream].shape}, expected {shape}"
            )
    rr_sum = np.zeros(shape, dtype=np.float64)
    s_sum = np.zeros(shape, dtype=np.float64)
    for stream in streams:
        rr_sum += reciprocal[stream]
        s_sum += scaled[stream]
    values = params.lam * rr_sum + (1.0 - params.lam) * s_sum
    return FusedScores(values=values, params=params,
                       scaled={s: scaled[s] for s in streams},
                       reciprocal={s: reciprocal[s] for s in streams})


def holdout(scaled: dict[str, np.ndarray], reciprocal: dict[str, np.ndarray],
            params: FusionParams, drop: str) -> FusedScores:
    """Fuse over the configured streams minus one."""
    if drop not in params.streams:
        raise UnknownStream(f"stream {drop!r} is not in the configured set {params.streams}")
    remaining = tuple(s for s in params.streams if s != drop)
    if not remaining:
        raise EmptyStreamSet("dropping the only stream leaves nothing to fuse")
    return fuse(scaled, reciprocal, params.replace(streams=remaining))


def fuse_from_cosines(cosines: dict[str, np.ndarray], params: FusionParams,
                      query_ids=None, gallery_ids=None) -> FusedScores:
    """Full fusion from raw per-stream cosine matrices."""
    scaled = {s: scaled_similarity(cosines[s], params.tau)
              for s in params.streams if s in cosines}
    reciprocal = {s: reciprocal_rank(rank_matrix(cosines[s]), params.k)
                  for s in params.streams if s in cosines}
    fused = fuse(scaled, reciprocal, params)
    fused.query_ids = query_ids
    fused.gallery_ids = gallery_ids
    return fused


def sweep(cosines: dict[str, np.ndarray], params: FusionParams, evaluate,
          lambda_grid=LAMBDA_GRID, tau_grid=TAU_GRID, k_grid=K_GRID) -> dict[str, list[tuple]]:
    """mAP over one-dimensional parameter grids, all else held at `params`.

    `evaluate` maps a fused score matrix to mAP. Returns one
    (value, mAP) row list per swept parameter.
    """
    tables: dict[str, list[tuple]] = {}
    if lambda_grid:
        tables["lambda"] = [
            (lam, evaluate(fuse_from_cosines(cosines, params.replace(lam=lam)).values))
            for lam in lambda_grid
        ]
    if tau_grid:
        tables["tau"] = [
            (tau, evaluate(fuse_from_cosines(cosines, params.replace(tau=tau)).values))
            for tau in tau_grid
        ]
    if k_grid:
        tables["k"] = [
            (k, evaluate(fuse_from_cosines(cosines, params.replace(k=k)).values))
            for k in k_grid
        ]
    return tables
