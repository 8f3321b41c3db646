"""Bootstrap confidence intervals and paired model comparisons.

Resampling is chunked, with each chunk's indices drawn from a child
generator keyed by (seed, chunk index). Results are therefore
bit-reproducible for a given (inputs, seed, B) and independent of how
chunks are scheduled across threads. Percentiles use the nearest-rank
rule; p-values use the add-one estimator (1 + exceedances) / (B + 1),
which never reports exactly zero.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import derived_rng
from .errors import EmptyAPs, LengthMismatch, QuerySetMismatch
from .kernels import paired_resample_deltas, resample_means

_CHUNK_ROWS = 4096


@dataclass(frozen=True)
class BootstrapParams:
    """Resampling configuration."""

    B: int = 50_000
    ci_levels: tuple[float, float] = (0.025, 0.975)
    seed: int = 0
    alpha: float = 0.05
    n_comparisons: int = 1
    unit: str = "query"  # or "trajectory": resample whole query groups

    def __post_init__(self):
        if self.B < 1:
            raise ValueError(f"B must be >= 1, got {self.B}")
        for level in self.ci_levels:
            if not 0.0 < level < 1.0:
                raise ValueError(f"ci levels must be in (0, 1), got {self.ci_levels}")
        if self.unit not in ("query", "trajectory"):
            raise ValueError(f"unit must be query or trajectory, got {self.unit!r}")


@dataclass(frozen=True)
class PairwiseResult:
    """Paired bootstrap comparison of two models on one query set."""

    model_a: str
    model_b: str
    delta_map: float
    p_value: float
    significant: bool


def nearest_rank(sorted_values: np.ndarray, level: float) -> float:
    """Nearest-rank percentile of an ascending array."""
    n = len(sorted_values)
    index = max(1, math.ceil(level * n))
    return float(sorted_values[index - 1])


def _iter_chunks(total: int):
    start = 0
    chunk = 0
    while start < total:
        rows = min(_CHUNK_ROWS, total - start)
        yield chunk, rows
        start += rows
        chunk += 1


def _group_arrays(values: np.ndarray, groups) -> tuple[np.ndarray, np.ndarray]:
    """Per-group sums and counts, groups ordered by first appearance key."""
    keys = sorted(set(groups))
    key_index = {k: i for i, k in enumerate(keys)}
    sums = np.zeros(len(keys))
    counts = np.zeros(len(keys))
    for value, group in zip(values, groups):
        sums[key_index[group]] += value
        counts[key_index[group]] += 1
    return sums, counts


def bootstrap_ci(aps, params: BootstrapParams,
                 groups=None) -> tuple[float, float, float]:
    """(mAP, lo, hi) from B resamples of the per-query AP vector.

    With params.unit == "trajectory", `groups` assigns each AP to a
    trajectory and whole groups are resampled instead of single queries.
    """
    values = np.asarray(aps, dtype=np.float64)
    if values.size == 0:
        raise EmptyAPs("cannot bootstrap an empty AP vector")
    point = float(values.mean())

    if params.unit == "trajectory":
        if groups is None:
            raise ValueError("trajectory-unit bootstrap needs per-query groups")
        sums, counts = _group_arrays(values, groups)
        n = len(sums)
        means = np.empty(params.B)
        done = 0
        for chunk, rows in _iter_chunks(params.B):
            idx = derived_rng(params.seed, chunk).integers(0, n, size=(rows, n))
            means[done:done + rows] = resample_means(sums, idx) / resample_means(counts, idx)
            done += rows
    else:
        n = values.size
        means = np.empty(params.B)
        done = 0
        for chunk, rows in _iter_chunks(params.B):
            idx = derived_rng(params.seed, chunk).integers(0, n, size=(rows, n))
            means[done:done + rows] = resample_means(values, idx)
            done += rows

    means.sort()
    lo = nearest_rank(means, params.ci_levels[0])
    hi = nearest_rank(means, params.ci_levels[1])
    return point, lo, hi


def paired_pvalue(aps_a, aps_b, params: BootstrapParams,
                  model_a: str = "A", model_b: str = "B",
                  groups=None) -> PairwiseResult:
    """Two-sided bootstrap test of equal mAP on a shared query set.

    The observed difference is mean(a) - mean(b); both vectors are
    mean-centered, query indices are resampled jointly, and the p-value
    counts resampled |differences| at least as large as the observed one.
    """
    a = np.asarray(aps_a, dtype=np.float64)
    b = np.asarray(aps_b, dtype=np.float64)
    if a.shape != b.shape:
        raise LengthMismatch(f"AP vectors differ in length: {a.shape} vs {b.shape}")
    if a.size == 0:
        raise EmptyAPs("cannot compare empty AP vectors")

    delta_obs = float(a.mean() - b.mean())
    a_centered = a - a.mean()
    b_centered = b - b.mean()

    exceed = 0
    if params.unit == "trajectory":
        if groups is None:
            raise ValueError("trajectory-unit bootstrap needs per-query groups")
        sums_a, counts = _group_arrays(a_centered, groups)
        sums_b, _ = _group_arrays(b_centered, groups)
        n = len(sums_a)
        for chunk, rows in _iter_chunks(params.B):
            idx = derived_rng(params.seed, chunk).integers(0, n, size=(rows, n))
            total = resample_means(counts, idx)
            deltas = (resample_means(sums_a, idx) - resample_means(sums_b, idx)) / total
            exceed += int(np.count_nonzero(np.abs(deltas) >= abs(delta_obs)))
    else:
        n = a.size
        for chunk, rows in _iter_chunks(params.B):
            idx = derived_rng(params.seed, chunk).integers(0, n, size=(rows, n))
            deltas = paired_resample_deltas(a_centered, b_centered, idx)
            exceed += int(np.count_nonzero(np.abs(deltas) >= abs(delta_obs)))

    p = (1 + exceed) / (params.B + 1)
    threshold = bonferroni_threshold(params.alpha, params.n_comparisons)
    return PairwiseResult(model_a=model_a, model_b=model_b, delta_map=delta_obs,
                          p_value=p, significant=p < threshold)


def bonferroni_threshold(alpha: float, n_comparisons: int) -> float:
    """Per-test significance level controlling the family-wise error rate."""
    if n_comparisons < 1:
        raise ValueError(f"n_comparisons must be >= 1, got {n_comparisons}")
    return alpha / n_comparisons


def pairwise_matrix(named_aps: dict[str, np.ndarray], params: BootstrapParams,
                    query_ids: dict[str, list] | None = None,
                    threads: int = 1, groups=None) -> list[PairwiseResult]:
    """Upper-triangular paired comparisons across M models.

    Every model must be evaluated on the same query set; pass query_ids
    to enforce it. Each pair gets its own child seed keyed by (i, j), so
    the result is independent of thread count and pair scheduling.
    """
    names = list(named_aps)
    if query_ids is not None:
        reference = None
        for name in names:
            ids = query_ids[name]
            if reference is None:
                reference = ids
            elif ids != reference:
                raise QuerySetMismatch(f"model {name!r} evaluates a different query set")
    lengths = {len(np.asarray(v)) for v in named_aps.values()}
    if len(lengths) > 1:
        raise LengthMismatch(f"AP vectors differ in length across models: {sorted(lengths)}")

    pairs = [(i, j) for i in range(len(names)) for j in range(i + 1, len(names))]

    def run(pair):
        i, j = pair
        pair_params = BootstrapParams(
            B=params.B, ci_levels=params.ci_levels,
            seed=int(derived_rng(params.seed, i, j).integers(0, 2**31 - 1)),
            alpha=params.alpha, n_comparisons=params.n_comparisons, unit=params.unit,
        )
        return paired_pvalue(named_aps[names[i]], named_aps[names[j]], pair_params,
                             model_a=names[i], model_b=names[j], groups=groups)

    if threads > 1 and len(pairs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(run, pairs))
    return [run(pair) for pair in pairs]
