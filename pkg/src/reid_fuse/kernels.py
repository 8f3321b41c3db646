"""Hot numeric kernels: bootstrap resampling and batched average precision.

Each kernel has a numba ``@njit`` implementation and a pure-numpy
fallback; `accel` picks the path at import time (``REID_FUSE_NUMBA=0``
forces numpy). Both paths are deterministic given the same inputs; they
may differ in the last float ulp because summation order differs.
``benchmarks/bench_kernels.py`` times the two side by side.
"""

from __future__ import annotations

import numpy as np

from .accel import NUMBA_ENABLED, njit

__all__ = ["resample_means", "paired_resample_deltas", "ap_batch", "KERNEL_BACKEND"]

KERNEL_BACKEND = "numba" if NUMBA_ENABLED else "numpy"


# --- pure numpy path ---

def resample_means_np(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """Mean of values[idx[r]] for each resample row r."""
    return values[idx].mean(axis=1)


def paired_resample_deltas_np(a: np.ndarray, b: np.ndarray, idx: np.ndarray) -> np.ndarray:
    """mean(a[idx[r]]) - mean(b[idx[r]]) for each jointly resampled row r."""
    return a[idx].mean(axis=1) - b[idx].mean(axis=1)


def ap_batch_np(relevance: np.ndarray) -> np.ndarray:
    """Average precision per row of a rank-ordered boolean relevance matrix.

    Column 0 is the top-ranked candidate. Rows with no relevant item
    yield nan; callers decide whether that query is excluded or an error.
    """
    rel = relevance.astype(np.float64)
    hits = np.cumsum(rel, axis=1)
    ranks = np.arange(1, rel.shape[1] + 1, dtype=np.float64)
    precision_at_hits = (hits / ranks) * rel
    totals = hits[:, -1] if rel.shape[1] else np.zeros(rel.shape[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        ap = precision_at_hits.sum(axis=1) / totals
    ap[totals == 0] = np.nan
    return ap


# --- numba path ---

@njit(cache=True)
def _resample_means_nb(values, idx):
    n_rows, n = idx.shape
    out = np.empty(n_rows, dtype=np.float64)
    for r in range(n_rows):
        total = 0.0
        for i in range(n):
            total += values[idx[r, i]]
        out[r] = total / n
    return out


@njit(cache=True)
def _paired_resample_deltas_nb(a, b, idx):
    n_rows, n = idx.shape
    out = np.empty(n_rows, dtype=np.float64)
    for r in range(n_rows):
        sa = 0.0
        sb = 0.0
        for i in range(n):
            j = idx[r, i]
            sa += a[j]
            sb += b[j]
        out[r] = sa / n - sb / n
    return out


@njit(cache=True)
def _ap_batch_nb(relevance):
    n_rows, n = relevance.shape
    out = np.empty(n_rows, dtype=np.float64)
    for r in range(n_rows):
        hits = 0.0
        acc = 0.0
        for i in range(n):
            if relevance[r, i]:
                hits += 1.0
                acc += hits / (i + 1)
        out[r] = acc / hits if hits > 0 else np.nan
    return out


def resample_means_nb(values: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return _resample_means_nb(
        np.ascontiguousarray(values, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.int64),
    )


def paired_resample_deltas_nb(a: np.ndarray, b: np.ndarray, idx: np.ndarray) -> np.ndarray:
    return _paired_resample_deltas_nb(
        np.ascontiguousarray(a, dtype=np.float64),
        np.ascontiguousarray(b, dtype=np.float64),
        np.ascontiguousarray(idx, dtype=np.int64),
    )


def ap_batch_nb(relevance: np.ndarray) -> np.ndarray:
    return _ap_batch_nb(np.ascontiguousarray(relevance, dtype=np.bool_))


if NUMBA_ENABLED:
    resample_means = resample_means_nb
    paired_resample_deltas = paired_resample_deltas_nb
    ap_batch = ap_batch_nb
else:
    resample_means = resample_means_np
    paired_resample_deltas = paired_resample_deltas_np
    ap_batch = ap_batch_np
