"""Retrieval evaluation: query sampling, average precision, mAP reports.

Two protocols share the AP machinery. Within-split validation retrieves
each sampled query against the other sampled images, with same-trajectory
samples relevant and the query's own column pushed out of the ranking.
Cross-camera testing retrieves validation queries against the full test
gallery, with relevance defined by annotator-confirmed trajectory pairs;
queries whose trajectory has no confirmed match are excluded from mAP
rather than scored zero.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import FusionParams, SampleId
from .errors import EmptyQuerySet, NoRelevant, NoVerifiedMatches, QuerySetMismatch
from .kernels import ap_batch
from .records import VerifiedMatch, confirmed_pairs


@dataclass
class QuerySet:
    """Sampled queries with their relevant gallery samples."""

    queries: list[SampleId]
    relevance: dict[SampleId, frozenset[SampleId]]
    gallery_ids: list[SampleId]
    per_id: int
    seed: int


@dataclass
class EvalReport:
    """Per-query APs and their mean for one model configuration."""

    mode: str
    query_split: str
    gallery_split: str
    model: str
    per_query: list[tuple[SampleId, float]]
    params: FusionParams | None = None
    n_excluded: int = 0

    @property
    def aps(self) -> np.ndarray:
        return np.array([ap for _, ap in self.per_query], dtype=np.float64)

    @property
    def map(self) -> float:
        return float(self.aps.mean())

    def query_ids(self) -> list[SampleId]:
        return [sid for sid, _ in self.per_query]


def sample_queries(split_ids: list[SampleId], per_id: int = 5, seed: int = 0,
                   gallery_ids: list[SampleId] | None = None) -> QuerySet:
    """Sample up to per_id images per trajectory for within-split retrieval.

    Sampling is uniform without replacement from a generator seeded by
    `seed`, iterating trajectories in sorted order, so two calls with the
    same inputs produce the same QuerySet. With gallery_ids=None the
    sampled subset itself serves as the gallery; passing the full split
    widens it.
    """
    rng = np.random.default_rng(seed)
    by_traj: dict[tuple[int, int], list[SampleId]] = {}
    for sid in sorted(split_ids):
        by_traj.setdefault(sid.trajectory, []).append(sid)

    sampled: list[SampleId] = []
    for traj in sorted(by_traj):
        ids = by_traj[traj]
        if len(ids) <= per_id:
            chosen = list(ids)
        else:
            pick = rng.choice(len(ids), size=per_id, replace=False)
            chosen = [ids[i] for i in sorted(pick)]
        sampled.extend(chosen)

    sampled.sort()
    gallery = sorted(gallery_ids) if gallery_ids is not None else list(sampled)
    gallery_set = set(gallery)
    relevance = {}
    for sid in sampled:
        mates = frozenset(
            other for other in gallery_set
            if other != sid and other.trajectory == sid.trajectory
        )
        relevance[sid] = mates
    return QuerySet(queries=sampled, relevance=relevance, gallery_ids=gallery,
                    per_id=per_id, seed=seed)


def average_precision(ranked_ids, relevant) -> float:
    """AP of one ranked candidate list against a set of relevant ids.

    AP = (1/R) * sum of precision at each rank holding a relevant item.
    """
    relevant = set(relevant)
    if not relevant:
        raise NoRelevant("relevant set is empty")
    hits = 0
    total = 0.0
    for rank, candidate in enumerate(ranked_ids, start=1):
        if candidate in relevant:
            hits += 1
            total += hits / rank
    if hits == 0:
        raise NoRelevant("no relevant item appears in the ranking")
    return total / len(relevant)


def _ranked_relevance(scores: np.ndarray, relevance_mask: np.ndarray) -> np.ndarray:
    """Reorder a boolean relevance matrix by descending score per row."""
    order = np.argsort(-scores, axis=1, kind="stable")
    return np.take_along_axis(relevance_mask, order, axis=1)


def _score_matrix(scores, query_ids, gallery_ids):
    values = np.asarray(scores, dtype=np.float64)
    if values.shape != (len(query_ids), len(gallery_ids)):
        raise QuerySetMismatch(
            f"score matrix shape {values.shape} does not match "
            f"{len(query_ids)} queries x {len(gallery_ids)} gallery items"
        )
    return values


def validation_eval(scores, query_set: QuerySet, model: str = "",
                    query_split: str = "val", params: FusionParams | None = None) -> EvalReport:
    """Within-split retrieval: rank, drop the self match, score AP per query.

    `scores` must expose .values, .query_ids and .gallery_ids covering the
    query set. Queries without any relevant gallery mate are excluded.
    """
    if not query_set.queries:
        raise EmptyQuerySet("query set is empty")
    values = _score_matrix(scores.values, scores.query_ids, scores.gallery_ids)

    q_index = {sid: i for i, sid in enumerate(scores.query_ids)}
    g_index = {sid: j for j, sid in enumerate(scores.gallery_ids)}
    missing = [sid for sid in query_set.queries if sid not in q_index]
    if missing:
        raise QuerySetMismatch(f"queries missing from score rows: {missing[:5]}")
    gallery_cols = [g_index[sid] for sid in query_set.gallery_ids]

    rows = np.array([q_index[sid] for sid in query_set.queries])
    sub = values[rows][:, gallery_cols]

    rel = np.zeros(sub.shape, dtype=bool)
    col_of = {sid: j for j, sid in enumerate(query_set.gallery_ids)}
    scored_queries: list[SampleId] = []
    keep_rows: list[int] = []
    for i, sid in enumerate(query_set.queries):
        for other in query_set.relevance[sid]:
            rel[i, col_of[other]] = True
        if sid in col_of:
            sub[i, col_of[sid]] = -np.inf  # self match never competes
            rel[i, col_of[sid]] = False
        if rel[i].any():
            keep_rows.append(i)
            scored_queries.append(sid)

    n_excluded = len(query_set.queries) - len(keep_rows)
    if not keep_rows:
        raise EmptyQuerySet("every query lacks relevant gallery samples")
    aps = ap_batch(_ranked_relevance(sub[keep_rows], rel[keep_rows]))
    return EvalReport(
        mode="val",
        query_split=query_split,
        gallery_split=query_split,
        model=model,
        per_query=list(zip(scored_queries, aps.tolist())),
        params=params,
        n_excluded=n_excluded,
    )


def test_eval(scores, matches: list[VerifiedMatch], model: str = "",
              query_split: str = "val", gallery_split: str = "test",
              params: FusionParams | None = None) -> EvalReport:
    """Cross-camera retrieval against annotator-confirmed trajectory pairs.

    Queries are restricted to samples whose trajectory has at least one
    confirmed match; every gallery sample of a confirmed matching
    trajectory is relevant.
    """
    confirmed = confirmed_pairs(matches)
    if not confirmed:
        raise NoVerifiedMatches("no confirmed trajectory pairs")
    values = _score_matrix(scores.values, scores.query_ids, scores.gallery_ids)

    gallery_ids = scores.gallery_ids
    rel_rows: list[np.ndarray] = []
    scored_queries: list[SampleId] = []
    keep_rows: list[int] = []
    n_candidates = 0
    for i, sid in enumerate(scores.query_ids):
        matched = confirmed.get(sid.trajectory)
        if not matched:
            continue
        n_candidates += 1
        rel = np.array([g.trajectory in matched for g in gallery_ids])
        if rel.any():
            keep_rows.append(i)
            rel_rows.append(rel)
            scored_queries.append(sid)

    if not keep_rows:
        raise NoVerifiedMatches("confirmed trajectories have no gallery samples")
    sub = values[np.array(keep_rows)]
    aps = ap_batch(_ranked_relevance(sub, np.stack(rel_rows)))
    return EvalReport(
        mode="test",
        query_split=query_split,
        gallery_split=gallery_split,
        model=model,
        per_query=list(zip(scored_queries, aps.tolist())),
        params=params,
        n_excluded=n_candidates - len(keep_rows),
    )


def model_compare(reports: dict[str, dict[str, EvalReport]],
                  ci_fn=None) -> list[dict]:
    """Rows of (model, per-mode mAP and CI) for reports sharing query sets.

    `reports` maps model name to {mode: EvalReport}. All reports of one
    mode must cover identical query ids. `ci_fn`, when given, maps an AP
    vector to a (lo, hi) confidence interval.
    """
    modes: list[str] = []
    for per_mode in reports.values():
        for mode in per_mode:
            if mode not in modes:
                modes.append(mode)
    for mode in modes:
        ids = None
        for name, per_mode in reports.items():
            if mode not in per_mode:
                continue
            current = per_mode[mode].query_ids()
            if ids is None:
                ids = current
            elif current != ids:
                raise QuerySetMismatch(
                    f"model {name!r} evaluates a different {mode} query set"
                )

    rows = []
    for name, per_mode in reports.items():
        row: dict = {"model": name}
        for mode in modes:
            report = per_mode.get(mode)
            if report is None:
                continue
            row[f"{mode}_map"] = report.map
            if ci_fn is not None:
                row[f"{mode}_ci"] = ci_fn(report.aps)
        rows.append(row)
    return rows
