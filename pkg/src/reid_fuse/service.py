"""Match-verification HTTP service.

Serves ranked cross-camera proposals, records annotator decisions in an
append-only log, and recomputes the verified-match evaluation on demand.
Retrieval state is immutable after startup; decision writes are
serialized through a lock and replayed from the log on restart.
"""

from __future__ import annotations

import threading
from pathlib import Path
from typing import Literal

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from fastapi.responses import FileResponse, HTMLResponse
from pydantic import BaseModel

from .core import FusionParams, SampleId, parse_trajectory
from .errors import NoVerifiedMatches, ReidFuseError, UnknownQuery, UnknownTrajectory
from .evaluation import test_eval
from .fusion import FusedScores
from .ingest import Dataset, load_dataset
from .pipeline import compute_scores, fused_from_artifact
from .records import VerifiedMatch, format_match_line, parse_match_line
from .stats import BootstrapParams, bootstrap_ci

SNAPSHOT_RESAMPLES = 2_000
IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg")


class VerifyPair(BaseModel):
    query: str
    gallery: str


class VerifyRequest(BaseModel):
    pair: VerifyPair
    status: Literal["confirmed", "rejected", "unsure"]
    annotator: str


class VerificationService:
    """Retrieval plus the decision log for one dataset."""

    def __init__(self, dataset: Dataset, log_path: Path,
                 images_dir: Path | None = None,
                 query_split: str = "val", gallery_split: str = "test",
                 interleave_models: bool = True):
        self.dataset = dataset
        self.log_path = Path(log_path)
        self.images_dir = Path(images_dir) if images_dir else None
        self.query_split = query_split
        self.gallery_split = gallery_split
        self._write_lock = threading.Lock()

        self.models: dict[str, FusionParams] = {"ensemble": dataset.config.fusion}
        if interleave_models and "full_image" in dataset.config.registry:
            try:
                baseline = dataset.config.fusion.replace(streams=("full_image",))
                self.models["full_image"] = baseline
            except ValueError:
                pass

        self._fused: dict[str, FusedScores] = {}
        for name, params in list(self.models.items()):
            try:
                artifact = compute_scores(dataset, query_split, gallery_split, params)
            except ReidFuseError:
                del self.models[name]  # e.g. baseline embeddings absent
                continue
            self._fused[name] = fused_from_artifact(artifact, params)

        # the session's ground truth is what annotators decided, replayed
        # from the log; matches shipped with the dataset stay offline
        self.decisions: list[VerifiedMatch] = []
        if self.log_path.exists():
            with open(self.log_path, "r", encoding="utf-8") as fh:
                for number, raw in enumerate(fh, start=1):
                    line = raw.strip()
                    if line:
                        self.decisions.append(parse_match_line(line, number))

        self._query_trajs = {sid.trajectory for sid in self._any_fused().query_ids}
        self._gallery_trajs = {sid.trajectory for sid in self._any_fused().gallery_ids}

    # -- internals --

    def _any_fused(self) -> FusedScores:
        return next(iter(self._fused.values()))

    def _fused_for(self, model: str) -> FusedScores:
        if model not in self._fused:
            raise UnknownQuery(f"unknown model {model!r}")
        return self._fused[model]

    def _trajectory_rows(self, fused: FusedScores) -> dict[tuple[int, int], np.ndarray]:
        rows: dict[tuple[int, int], list[int]] = {}
        for i, sid in enumerate(fused.query_ids):
            rows.setdefault(sid.trajectory, []).append(i)
        return {traj: np.array(idx) for traj, idx in rows.items()}

    def _decided_trajectories(self) -> set[tuple[int, int]]:
        return {m.query_trajectory for m in self.decisions}

    # -- queue --

    def queue(self, limit: int | None = None, models: list[str] | None = None) -> list[dict]:
        """Query trajectories ordered by descending top-1 fused score.

        With several models the per-model queues interleave round-robin,
        skipping trajectories already proposed, so both configurations
        get verification attention.
        """
        names = models or list(self.models)
        per_model: list[list[dict]] = []
        for name in names:
            fused = self._fused_for(name)
            entries = []
            for traj, rows in self._trajectory_rows(fused).items():
                block = fused.values[rows]
                flat = int(np.argmax(block))
                r, c = np.unravel_index(flat, block.shape)
                entries.append({
                    "trajectory": f"{traj[0]}:{traj[1]}",
                    "top_score": float(block[r, c]),
                    "proposed": f"{fused.gallery_ids[c].trajectory[0]}:"
                                f"{fused.gallery_ids[c].trajectory[1]}",
                    "model": name,
                })
            entries.sort(key=lambda e: (-e["top_score"], e["trajectory"]))
            per_model.append(entries)

        decided = self._decided_trajectories()
        seen: set[str] = set()
        merged: list[dict] = []
        cursors = [0] * len(per_model)
        while True:
            progressed = False
            for m, entries in enumerate(per_model):
                while cursors[m] < len(entries) and entries[cursors[m]]["trajectory"] in seen:
                    cursors[m] += 1
                if cursors[m] < len(entries):
                    entry = entries[cursors[m]]
                    cursors[m] += 1
                    seen.add(entry["trajectory"])
                    entry["decided"] = parse_trajectory(entry["trajectory"]) in decided
                    merged.append(entry)
                    progressed = True
            if not progressed:
                break
        if limit is not None:
            merged = merged[:limit]
        return merged

    # -- retrieval --

    def _breakdown(self, fused: FusedScores, row: int, col: int) -> dict:
        out = {}
        for stream in fused.params.streams:
            s = fused.scaled[stream][row, col]
            rr = fused.reciprocal[stream][row, col]
            rank = int(round(1.0 / rr - fused.params.k))
            out[stream] = {
                "s": float(s),
                "rr": float(rr),
                "rank": rank,
                "cos": self._cos_lookup(stream, fused, row, col),
            }
        return out

    def _cos_lookup(self, stream: str, fused: FusedScores, row: int, col: int) -> float:
        q = self.dataset.embeddings.get(fused.query_ids[row], stream).astype(np.float64)
        g = self.dataset.embeddings.get(fused.gallery_ids[col], stream).astype(np.float64)
        return float(q @ g)

    def _image_url(self, sid: SampleId) -> str:
        return f"/api/image?sample={sid}"

    def retrieve(self, query: str, k: int = 5, model: str = "ensemble") -> dict:
        """Top-k candidates for a query sample (cam:traj:frame) or trajectory."""
        fused = self._fused_for(model)
        parts = query.split(":")
        if len(parts) == 3:
            return self._retrieve_sample(fused, SampleId.parse(query), k, model)
        if len(parts) == 2:
            return self._retrieve_trajectory(fused, parse_trajectory(query), k, model)
        raise UnknownQuery(f"query must be cam:traj or cam:traj:frame, got {query!r}")

    def _retrieve_sample(self, fused: FusedScores, sid: SampleId, k: int, model: str) -> dict:
        try:
            row = fused.query_ids.index(sid)
        except ValueError:
            raise UnknownQuery(f"unknown query sample {sid}")
        order = np.argsort(-fused.values[row], kind="stable")[:k]
        candidates = []
        for col in order:
            gid = fused.gallery_ids[int(col)]
            candidates.append({
                "sample": str(gid),
                "trajectory": f"{gid.trajectory[0]}:{gid.trajectory[1]}",
                "score": float(fused.values[row, int(col)]),
                "breakdown": self._breakdown(fused, row, int(col)),
                "images": [self._image_url(gid)],
            })
        return {"query": str(sid), "model": model,
                "query_images": [self._image_url(sid)], "candidates": candidates}

    def _retrieve_trajectory(self, fused: FusedScores, traj: tuple[int, int],
                             k: int, model: str) -> dict:
        rows = self._trajectory_rows(fused).get(traj)
        if rows is None:
            raise UnknownQuery(f"unknown query trajectory {traj[0]}:{traj[1]}")
        by_gallery_traj: dict[tuple[int, int], tuple[float, int, int]] = {}
        block = fused.values[rows]
        for j, gid in enumerate(fused.gallery_ids):
            local = int(np.argmax(block[:, j]))
            score = float(block[local, j])
            g_traj = gid.trajectory
            best = by_gallery_traj.get(g_traj)
            if best is None or score > best[0]:
                by_gallery_traj[g_traj] = (score, int(rows[local]), j)
        ranked = sorted(by_gallery_traj.items(), key=lambda kv: (-kv[1][0], kv[0]))[:k]
        candidates = []
        for g_traj, (score, row, col) in ranked:
            gid = fused.gallery_ids[col]
            candidates.append({
                "trajectory": f"{g_traj[0]}:{g_traj[1]}",
                "sample": str(gid),
                "score": score,
                "breakdown": self._breakdown(fused, row, col),
                "images": [self._image_url(gid)],
                "query_sample": str(fused.query_ids[row]),
            })
        query_images = [self._image_url(fused.query_ids[int(r)]) for r in rows[:3]]
        return {"query": f"{traj[0]}:{traj[1]}", "model": model,
                "query_images": query_images, "candidates": candidates}

    # -- decisions --

    def record_verification(self, query: str, gallery: str, status: str,
                            annotator: str, timestamp: str | None = None) -> VerifiedMatch:
        q_traj = parse_trajectory(query)
        g_traj = parse_trajectory(gallery)
        if q_traj not in self._query_trajs:
            raise UnknownTrajectory(f"query trajectory {query} not in split {self.query_split!r}")
        if g_traj not in self._gallery_trajs:
            raise UnknownTrajectory(
                f"gallery trajectory {gallery} not in split {self.gallery_split!r}"
            )
        if timestamp is None:
            import datetime

            timestamp = datetime.datetime.now(datetime.timezone.utc).isoformat()
        match = VerifiedMatch(q_traj, g_traj, status, annotator, timestamp)
        with self._write_lock:
            with open(self.log_path, "a", encoding="utf-8") as fh:
                fh.write(format_match_line(match) + "\n")
            self.decisions.append(match)
        return match

    # -- evaluation --

    def evaluation_snapshot(self, model: str = "ensemble",
                            resamples: int = SNAPSHOT_RESAMPLES, seed: int = 0) -> dict:
        fused = self._fused_for(model)
        with self._write_lock:
            decisions = list(self.decisions)
        report = test_eval(fused, decisions, model=model,
                           query_split=self.query_split,
                           gallery_split=self.gallery_split, params=fused.params)
        point, lo, hi = bootstrap_ci(report.aps, BootstrapParams(B=resamples, seed=seed))
        return {
            "model": model,
            "map": report.map,
            "ci": [lo, hi],
            "n_queries": len(report.per_query),
            "n_trajectories": len({sid.trajectory for sid, _ in report.per_query}),
            "per_query": [{"query": str(sid), "ap": ap} for sid, ap in report.per_query],
        }

    def image_path(self, sid: SampleId) -> Path:
        if self.images_dir is None:
            raise FileNotFoundError("service started without an images directory")
        stem = self.images_dir / f"cam{sid.camera_id}" / f"traj{sid.trajectory_id}"
        for suffix in IMAGE_SUFFIXES:
            candidate = stem / f"frame{sid.frame_index}{suffix}"
            if candidate.exists():
                return candidate
        raise FileNotFoundError(f"no image for sample {sid}")


def create_app(dataset_dir, images_dir=None, query_split: str = "val",
               gallery_split: str = "test", frontend_dir=None) -> FastAPI:
    dataset = load_dataset(dataset_dir)
    service = VerificationService(
        dataset,
        log_path=Path(dataset_dir) / "verifications.log",
        images_dir=images_dir,
        query_split=query_split,
        gallery_split=gallery_split,
    )
    app = FastAPI(title="reid-fuse verification service")
    app.state.service = service

    def guard(fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except (UnknownQuery, UnknownTrajectory, FileNotFoundError) as exc:
            raise HTTPException(status_code=404, detail=str(exc))
        except NoVerifiedMatches as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except (ReidFuseError, ValueError) as exc:
            raise HTTPException(status_code=400, detail=str(exc))

    @app.get("/api/queue")
    def api_queue(limit: int | None = None, models: str | None = None):
        names = models.split(",") if models else None
        return guard(service.queue, limit=limit, models=names)

    @app.get("/api/retrieve")
    def api_retrieve(query: str, k: int = 5, model: str = "ensemble"):
        return guard(service.retrieve, query, k=k, model=model)

    @app.post("/api/verify")
    def api_verify(request: VerifyRequest):
        match = guard(
            service.record_verification,
            request.pair.query, request.pair.gallery, request.status, request.annotator,
        )
        return {
            "query": f"{match.query_trajectory[0]}:{match.query_trajectory[1]}",
            "gallery": f"{match.gallery_trajectory[0]}:{match.gallery_trajectory[1]}",
            "status": match.status,
            "annotator": match.annotator,
            "timestamp": match.timestamp,
        }

    @app.get("/api/evaluate")
    def api_evaluate(mode: str = "test", model: str = "ensemble"):
        if mode != "test":
            raise HTTPException(status_code=400, detail="only mode=test is served live")
        return guard(service.evaluation_snapshot, model=model)

    @app.get("/api/models")
    def api_models():
        return [
            {
                "name": name,
                "streams": list(params.streams),
                "lambda": params.lam,
                "tau": params.tau,
                "k": params.k,
            }
            for name, params in service.models.items()
        ]

    @app.get("/api/image")
    def api_image(sample: str):
        path = guard(service.image_path, SampleId.parse(sample))
        return FileResponse(path)

    if frontend_dir is not None:
        index = Path(frontend_dir) / "index.html"

        @app.get("/", response_class=HTMLResponse)
        def root():
            return index.read_text(encoding="utf-8")

        from fastapi.staticfiles import StaticFiles

        app.mount("/assets", StaticFiles(directory=Path(frontend_dir) / "assets"),
                  name="assets")

    return app


def run_server(dataset_dir, port: int = 8000, images_dir=None, frontend_dir=None,
               host: str = "127.0.0.1") -> None:
    import uvicorn

    app = create_app(dataset_dir, images_dir=images_dir, frontend_dir=frontend_dir)
    uvicorn.run(app, host=host, port=port)
